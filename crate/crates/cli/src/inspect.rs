use std::path::PathBuf;

use anyhow::{anyhow, Context};
use urbani_core::datasets::{save_png, PlanningLabel};

use crate::annotate::annotate;
use crate::failure::{check_threshold, load_models, Classify, Failure};
use crate::map::analyze;
use crate::InspectArgs;

pub fn run(args: InspectArgs) -> Result<(), Failure> {
    check_threshold("--score-threshold", args.models.score_threshold)?;
    check_threshold("--class-threshold", args.models.class_threshold)?;
    let (classifier, detector) = load_models(&args.models.classifier, &args.models.detector)?;
    if !args.image.is_file() {
        return Err(Failure::data(anyhow!("image {} does not exist", args.image.display())));
    }
    let a = analyze(
        &args.image,
        &classifier,
        &detector,
        args.models.class_threshold,
        args.models.score_threshold,
    )
    .with_context(|| format!("inspecting {}", args.image.display()))
    .or_data()?;

    let (w, h) = a.image.dimensions();
    let label = match a.status.label {
        PlanningLabel::Planned => "planned",
        PlanningLabel::Unplanned => "unplanned",
    };
    println!("image: {} ({w}x{h})", args.image.display());
    println!(
        "planning: {label} (p_unplanned={:.4}, threshold={})",
        a.status.probability_unplanned, a.status.threshold
    );
    println!("detections: {}", a.detections.len());
    for d in &a.detections {
        let b = d.bbox.scale(w as f64, h as f64);
        println!(
            "  {} {:.3} [{:.1}, {:.1}, {:.1}, {:.1}]",
            d.label, d.score, b.xmin, b.ymin, b.xmax, b.ymax
        );
    }
    match a.geo {
        Some(g) => println!("geo: {:.6}, {:.6}", g.latitude, g.longitude),
        None => println!("geo: absent"),
    }
    match a.time {
        Some(t) => println!(
            "time: {:04}-{:02}-{:02} {:02}:{:02}:{:02}",
            t.year, t.month, t.day, t.hour, t.minute, t.second
        ),
        None => println!("time: absent"),
    }

    if let Some(target) = args.annotate {
        let path = target.unwrap_or_else(|| {
            let stem = args
                .image
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "image".into());
            args.image
                .parent()
                .map(PathBuf::from)
                .unwrap_or_default()
                .join(format!("{stem}_annotated.png"))
        });
        save_png(&annotate(&a.image, a.status.label, &a.detections), &path).or_data()?;
        println!("annotated: {}", path.display());
    }
    Ok(())
}
