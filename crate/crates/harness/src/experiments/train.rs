//! Training experiments: fit a coin-flipping model on a synthetic dataset,
//! score it under the amplification schemes, and (for the dropout
//! architecture) emit the full train/test ablation table.

use cfnn_core::amplify::{delta_curve, empirical_random_accuracy};
use cfnn_core::numerics::{make_rng, RngStream};
use cfnn_core::train::{
    deterministic_accuracy, mean_aggregate_accuracy, sampling_generalization, train, CfnnModel,
    CfnnNet, HypernetSpec, ModelClassifier, TrainConfig,
};

use crate::config::ExperimentConfig;
use crate::dataset::{gen_dataset, DatasetParams, LabeledData};
use crate::error::{HarnessError, Result};
use crate::report::{CurveTable, Deadline, ExperimentReport};

const CLASSES: usize = 2;
const INPUT_DIM: usize = 2;

pub(crate) fn build_model(arch: &str, rng: &mut RngStream) -> Result<CfnnModel> {
    Ok(match arch {
        "plain" => CfnnModel::Net(
            CfnnNet::builder(INPUT_DIM)
                .dense(16)
                .tanh()
                .dense(16)
                .tanh()
                .dense(CLASSES)
                .build(rng)?,
        ),
        "dropout" => CfnnModel::Net(
            CfnnNet::builder(INPUT_DIM)
                .dense(32)
                .tanh()
                .dropout(0.5)
                .dense(32)
                .tanh()
                .dropout(0.5)
                .dense(CLASSES)
                .build(rng)?,
        ),
        "hypernet" => CfnnModel::Hypernet(HypernetSpec::toy(INPUT_DIM, CLASSES, rng)?),
        other => {
            return Err(HarnessError::Config(format!(
                "unknown architecture {other:?}"
            )))
        }
    })
}

fn train_config(cfg: &ExperimentConfig) -> TrainConfig {
    TrainConfig {
        n_train: cfg.n_train,
        epochs: cfg.epochs,
        ..TrainConfig::default()
    }
}

struct Prepared {
    train_data: LabeledData,
    test_data: LabeledData,
}

fn prepare_data(cfg: &ExperimentConfig) -> Result<Prepared> {
    let params = DatasetParams {
        dim: INPUT_DIM,
        ..DatasetParams::default()
    };
    let mut seeder = make_rng(cfg.seed).split(77);
    let train_seed = seeder.next_u64();
    let test_seed = seeder.next_u64();
    let test_size = (cfg.points / 2).max(1);
    Ok(Prepared {
        train_data: gen_dataset(&cfg.dataset, cfg.points, train_seed, &params)?,
        test_data: gen_dataset(&cfg.dataset, test_size, test_seed, &params)?,
    })
}

pub fn run_train_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let deadline = Deadline::new(cfg.max_seconds);
    let mut report = ExperimentReport::new(cfg);
    let data = prepare_data(cfg)?;
    let root = make_rng(cfg.seed);

    let mut model = build_model(&cfg.arch, &mut root.split(1))?;
    let tc = train_config(cfg);
    let train_report = train(
        &mut model,
        &data.train_data,
        Some(&data.test_data),
        &tc,
        &root.split(2),
    )?;
    deadline.check()?;

    let mut epoch_curve = CurveTable::new("epochs", &["epoch", "train_loss", "val_ra"]);
    for em in &train_report.epochs {
        let val_ra = em.val_ra.expect("validation data supplied to train");
        epoch_curve.push_row(vec![em.epoch as f64, em.train_loss, val_ra])?;
    }
    report.curves.push(epoch_curve);
    report.metric("clamp_events", train_report.clamp_events as f64)?;

    // held-out random accuracy at each requested sample count
    let clf = ModelClassifier(&model);
    let mut n_sorted = cfg.n_test.clone();
    n_sorted.sort_unstable();
    for (i, &n) in n_sorted.iter().enumerate() {
        let ra = empirical_random_accuracy(&clf, &data.test_data, n, &root.split(600 + i as u64))?;
        report.metric(format!("ra_n{n}"), ra)?;
        deadline.check()?;
    }
    let n_max = *n_sorted.last().expect("validated nonempty");

    // delta curve at the largest sample count
    let dc = delta_curve(
        &clf,
        &data.test_data,
        n_max,
        &root.split(600 + (n_sorted.len() - 1) as u64),
    )?;
    report.metric("delta_positive_fraction", dc.positive_fraction)?;
    let mut delta_table = CurveTable::new("delta", &["rank", "delta"]);
    for (rank, &d) in dc.deltas.iter().enumerate() {
        delta_table.push_row(vec![rank as f64, d])?;
    }
    report.curves.push(delta_table);

    match cfg.arch.as_str() {
        "hypernet" => hypernet_extras(cfg, &model, &data, &root, &mut report, &deadline)?,
        "dropout" => dropout_ablation(cfg, &model, &data, &root, &mut report, &deadline)?,
        _ => {}
    }

    report.metric("runtime_seconds", deadline.elapsed_seconds())?;
    Ok(report)
}

/// Deterministic linear baseline (trained to convergence) and the spread of
/// the generated head parameters.
fn hypernet_extras(
    cfg: &ExperimentConfig,
    model: &CfnnModel,
    data: &Prepared,
    root: &RngStream,
    report: &mut ExperimentReport,
    deadline: &Deadline,
) -> Result<()> {
    let mut linear = CfnnModel::Net(
        CfnnNet::builder(INPUT_DIM)
            .dense(CLASSES)
            .build(&mut root.split(3))?,
    );
    let tc = TrainConfig {
        n_train: 1,
        epochs: cfg.epochs.max(300),
        lr: 0.1,
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    train(&mut linear, &data.train_data, None, &tc, &root.split(4))?;
    deadline.check()?;
    let baseline = match &linear {
        CfnnModel::Net(net) => deterministic_accuracy(net, &data.test_data)?,
        CfnnModel::Hypernet(_) => unreachable!(),
    };
    report.metric("baseline_linear_accuracy", baseline)?;

    if let CfnnModel::Hypernet(spec) = model {
        let mut rng = root.split(5);
        let draws = 200;
        let mut thetas = Vec::with_capacity(draws);
        for _ in 0..draws {
            let (z1, z2, y_bar) = spec.draw_ports(&mut rng);
            thetas.push(spec.generate_theta(&z1, &z2, y_bar)?);
        }
        let dim = thetas[0].len();
        let mut variance = 0.0;
        for j in 0..dim {
            let mean = thetas.iter().map(|t| t[j]).sum::<f64>() / draws as f64;
            variance +=
                thetas.iter().map(|t| (t[j] - mean) * (t[j] - mean)).sum::<f64>() / draws as f64;
        }
        report.metric("generated_param_variance", variance / dim as f64)?;
    }
    Ok(())
}

/// The six-cell {standard, majority} train x {standard, mean, majority}
/// test table for dropout networks.
fn dropout_ablation(
    cfg: &ExperimentConfig,
    maj_model: &CfnnModel,
    data: &Prepared,
    root: &RngStream,
    report: &mut ExperimentReport,
    deadline: &Deadline,
) -> Result<()> {
    let mut std_model = build_model(&cfg.arch, &mut root.split(1))?;
    let tc = TrainConfig {
        n_train: 1,
        epochs: cfg.epochs,
        ..TrainConfig::default()
    };
    train(&mut std_model, &data.train_data, None, &tc, &root.split(6))?;
    deadline.check()?;

    let n_amp = *cfg.n_test.iter().max().expect("validated nonempty");
    let mut table = CurveTable::new("ablation", &["maj_train", "test_mode", "accuracy"]);
    for (train_tag, model) in [(0.0, &std_model), (1.0, maj_model)] {
        let net = match model {
            CfnnModel::Net(net) => net,
            CfnnModel::Hypernet(_) => {
                return Err(HarnessError::Config(
                    "ablation needs a dropout net".into(),
                ))
            }
        };
        let standard = deterministic_accuracy(net, &data.test_data)?;
        let mean = mean_aggregate_accuracy(model, &data.test_data, n_amp, &root.split(800))?;
        let maj = empirical_random_accuracy(
            &ModelClassifier(model),
            &data.test_data,
            n_amp,
            &root.split(801),
        )?;
        let prefix = if train_tag == 0.0 { "standard" } else { "maj" };
        report.metric(format!("cell_{prefix}_standard"), standard)?;
        report.metric(format!("cell_{prefix}_mean"), mean)?;
        report.metric(format!("cell_{prefix}_maj"), maj)?;
        table.push_row(vec![train_tag, 0.0, standard])?;
        table.push_row(vec![train_tag, 1.0, mean])?;
        table.push_row(vec![train_tag, 2.0, maj])?;
        deadline.check()?;
    }
    report.curves.push(table);
    Ok(())
}

/// Sampling-generalization sweep: train once, then score random accuracy at
/// each `n_test`, repeated with fresh streams.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let deadline = Deadline::new(cfg.max_seconds);
    let mut report = ExperimentReport::new(cfg);
    let data = prepare_data(cfg)?;
    let root = make_rng(cfg.seed);

    let mut model = build_model(&cfg.arch, &mut root.split(1))?;
    let tc = train_config(cfg);
    train(&mut model, &data.train_data, None, &tc, &root.split(2))?;
    deadline.check()?;

    let rows = sampling_generalization(
        &ModelClassifier(&model),
        &data.test_data,
        &cfg.n_test,
        cfg.repeats,
        &root.split(3),
    )?;
    let mut curve = CurveTable::new("sweep", &["n_test", "ra_mean", "ra_std", "repeats"]);
    for row in &rows {
        curve.push_row(vec![
            row.n_test as f64,
            row.ra_mean,
            row.ra_std,
            row.repeats as f64,
        ])?;
        deadline.check()?;
    }
    report.metric("sweep_first_mean", rows.first().unwrap().ra_mean)?;
    report.metric("sweep_last_mean", rows.last().unwrap().ra_mean)?;
    report.curves.push(curve);
    report.metric("runtime_seconds", deadline.elapsed_seconds())?;
    Ok(report)
}
