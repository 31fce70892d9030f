use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::info;
use urbani_core::datasets::{
    generate_synthetic_classification, generate_synthetic_detection, load_detection_annotations, load_labeled_folders,
    SplitSpec, SHAPE_COLORS,
};
use urbani_core::detector::{train_detector, DetectorConfig, DetectorError, SsdModel};
use urbani_core::slumsnet::{accuracy, build_slumsnet, train, SlumsNet, SlumsNetConfig, SlumsNetError};
use urbani_nnet::OptimizerConfig;

use crate::failure::{Classify, Failure};
use crate::{ClassifierPreset, DataSource, DetectorPreset, TrainDetectorArgs, TrainSlumsnetArgs};

fn classify_slumsnet(e: SlumsNetError) -> Failure {
    match e {
        SlumsNetError::InvalidConfig(_) => Failure::usage(e),
        _ => Failure::data(e),
    }
}

fn classify_detector(e: DetectorError) -> Failure {
    match e {
        DetectorError::InvalidConfig(_) => Failure::usage(e),
        _ => Failure::data(e),
    }
}

fn set_learning_rate(opt: &mut OptimizerConfig, lr: f64) {
    match opt {
        OptimizerConfig::Adam(c) => c.learning_rate = lr,
        OptimizerConfig::Sgd { learning_rate, .. } => *learning_rate = lr,
    }
}

fn data_root(source: &DataSource) -> Result<Option<&Path>, Failure> {
    match &source.data {
        Some(root) if !root.is_dir() => Err(Failure::data(anyhow!("data root {} does not exist", root.display()))),
        Some(root) => Ok(Some(root)),
        None => Ok(None),
    }
}

fn synthetic_count(source: &DataSource) -> Result<usize, Failure> {
    source
        .synthetic
        .ok_or_else(|| Failure::usage(anyhow!("either --data or --synthetic is required")))
}

pub fn slumsnet(args: TrainSlumsnetArgs) -> Result<(), Failure> {
    let mut cfg = match args.preset {
        ClassifierPreset::Full => SlumsNetConfig::default(),
        ClassifierPreset::Desk => SlumsNetConfig::desk(),
    };
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.steps_per_epoch {
        cfg.steps_per_epoch = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.learning_rate {
        set_learning_rate(&mut cfg.optimizer, v);
    }
    cfg.validate().map_err(classify_slumsnet)?;
    let split = SplitSpec {
        train_fraction: args.train_fraction,
        seed: args.seed,
    };

    let ds = match data_root(&args.source)? {
        Some(root) => load_labeled_folders(root).or_data()?,
        None => {
            generate_synthetic_classification(synthetic_count(&args.source)?, cfg.input_side.max(16) as u32, args.seed)
                .or_usage()?
        }
    };
    if !ds.has_both_labels() {
        return Err(Failure::data(anyhow!(
            "the dataset needs both planned and unplanned images"
        )));
    }
    let (train_set, validation) = ds.split(&split).or_usage()?;
    info!("{} training / {} validation images", train_set.len(), validation.len());

    let mut net = build_slumsnet(&cfg, args.seed).map_err(classify_slumsnet)?;
    let metrics_path = args.metrics.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".metrics");
        PathBuf::from(p)
    });
    let mut metrics = BufWriter::new(
        File::create(&metrics_path)
            .with_context(|| format!("creating {}", metrics_path.display()))
            .or_data()?,
    );
    let history = train(
        &mut net,
        &train_set,
        (!validation.is_empty()).then_some(&validation),
        &cfg,
        args.seed,
        Some(&mut metrics),
    )
    .map_err(classify_slumsnet)?;
    metrics
        .flush()
        .with_context(|| format!("writing {}", metrics_path.display()))
        .or_data()?;

    let acc = match history.validation_accuracies.last() {
        Some(&a) => a,
        None => accuracy(&net, &validation, cfg.threshold).map_err(classify_slumsnet)?,
    };
    let model = SlumsNet::new(cfg, net);
    model
        .save(&args.out, args.seed, &history)
        .map_err(classify_slumsnet)
        .map_err(|f| Failure {
            error: f.error.context(format!("saving {}", args.out.display())),
            ..f
        })?;
    println!(
        "validation accuracy {acc:.4} ({} training / {} validation images)",
        train_set.len(),
        validation.len()
    );
    println!("checkpoint {}", args.out.display());
    println!("metrics {}", metrics_path.display());
    Ok(())
}

pub fn detector(args: TrainDetectorArgs) -> Result<(), Failure> {
    let mut cfg = match args.preset {
        DetectorPreset::Full => DetectorConfig::default(),
        DetectorPreset::Desk => DetectorConfig::desk(),
        DetectorPreset::Overfit => DetectorConfig::overfit(),
    };
    if args.published_schedule {
        cfg = cfg.with_published_schedule();
    }
    if let Some(v) = args.steps {
        cfg.steps = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.learning_rate {
        set_learning_rate(&mut cfg.optimizer, v);
    }
    if let Some(classes) = &args.classes {
        cfg.classes = std::iter::once("background".to_string())
            .chain(classes.iter().map(|c| c.trim().to_string()).filter(|c| !c.is_empty()))
            .collect();
    }
    cfg.validate().map_err(classify_detector)?;

    let mut ds = match data_root(&args.source)? {
        Some(root) => load_detection_annotations(root, &cfg.classes).or_data()?,
        None => {
            if let Some((missing, _)) = SHAPE_COLORS.iter().find(|(n, _)| !cfg.classes.iter().any(|c| c == n)) {
                return Err(Failure::usage(anyhow!(
                    "synthetic data draws class `{missing}`, absent from the class list"
                )));
            }
            generate_synthetic_detection(synthetic_count(&args.source)?, cfg.input_side as u32, args.seed).or_usage()?
        }
    };
    ds.classes = cfg.classes.clone();
    if ds.is_empty() {
        return Err(Failure::data(anyhow!("the dataset holds no annotated images")));
    }
    let images = ds.training_images().or_data()?;

    let steps = cfg.steps;
    let mut model = SsdModel::build(cfg, args.seed).map_err(classify_detector)?;
    info!(
        "{} images, {} default boxes, {} parameters",
        images.len(),
        model.defaults().len(),
        model.parameter_count()
    );
    let history = train_detector(&mut model, &images, args.seed, |step, loss| {
        if step % 100 == 0 || step + 1 == steps {
            info!("step {step} loss {loss:.6}");
        }
    })
    .map_err(classify_detector)?;
    model
        .save(&args.out, args.seed, &history)
        .map_err(classify_detector)
        .map_err(|f| Failure {
            error: f.error.context(format!("saving {}", args.out.display())),
            ..f
        })?;
    println!(
        "final multibox loss {:.6} ({} steps, {} images)",
        history.final_loss,
        steps,
        images.len()
    );
    println!("checkpoint {}", args.out.display());
    Ok(())
}
