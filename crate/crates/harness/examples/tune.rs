//! Scratch harness for training hyperparameter probes.
//! Usage: tune <arch> <epochs> <points> <lr> <wd> <momentum> <n_train> <seed> [init_scale]

use cfnn_core::amplify::empirical_random_accuracy;
use cfnn_core::numerics::make_rng;
use cfnn_core::train::{train, CfnnModel, ModelClassifier, TrainConfig};
use cfnn_harness::dataset::{gen_dataset, DatasetParams};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let arch = args[1].clone();
    let epochs: usize = args[2].parse().unwrap();
    let points: usize = args[3].parse().unwrap();
    let lr: f64 = args[4].parse().unwrap();
    let wd: f64 = args[5].parse().unwrap();
    let momentum: f64 = args[6].parse().unwrap();
    let n_train: u64 = args[7].parse().unwrap();
    let seed: u64 = args[8].parse().unwrap();
    let tau: f64 = args.get(9).map(|s| s.parse().unwrap()).unwrap_or(1.0);

    let params = DatasetParams {
        dim: 2,
        ..DatasetParams::default()
    };
    let mut seeder = make_rng(seed).split(77);
    let train_data = gen_dataset("circles", points, seeder.next_u64(), &params).unwrap();
    let test_data = gen_dataset("circles", points / 2, seeder.next_u64(), &params).unwrap();

    let init_scale: f64 = args.get(10).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let batch: usize = args.get(11).map(|s| s.parse().unwrap()).unwrap_or(64);
    let sched: String = args.get(12).cloned().unwrap_or_else(|| "cos".into());
    let opt: String = args.get(13).cloned().unwrap_or_else(|| "sgd".into());
    let loss: String = args.get(14).cloned().unwrap_or_else(|| "hinge".into());
    let root = make_rng(seed);
    let mut model =
        cfnn_harness_tune::build(&arch, &mut root.split(1)).unwrap();
    if init_scale != 1.0 {
        if let CfnnModel::Hypernet(spec) = &mut model {
            let params = &mut spec.generator.params;
            let w_slot = params.slot_count() - 2;
            for v in &mut params.tensor_mut(w_slot).data {
                *v *= init_scale;
            }
        }
    }
    let tc = TrainConfig {
        n_train,
        tau,
        epochs,
        lr,
        weight_decay: wd,
        momentum,
        batch_size: batch,
        lr_schedule: if sched == "const" {
            cfnn_core::train::LrSchedule::Constant
        } else {
            cfnn_core::train::LrSchedule::Cosine
        },
        optimizer: if opt == "adam" {
            cfnn_core::train::Optimizer::adam()
        } else {
            cfnn_core::train::Optimizer::SgdMomentum
        },
        loss: if loss == "ce" {
            cfnn_core::train::LossKind::CrossEntropy
        } else {
            cfnn_core::train::LossKind::HingeMargin { margin: 0.2 }
        },
        ..TrainConfig::default()
    };
    let report = train(&mut model, &train_data, Some(&test_data), &tc, &root.split(2)).unwrap();
    for em in report.epochs.iter().step_by((epochs / 10).max(1)) {
        println!(
            "epoch {:3} loss {:.4} val_ra {:.3}",
            em.epoch,
            em.train_loss,
            em.val_ra.unwrap()
        );
    }
    let clf = ModelClassifier(&model);
    for n in [1u64, 9, 101] {
        let ra = empirical_random_accuracy(&clf, &test_data, n, &root.split(600 + n)).unwrap();
        println!("ra@{n} = {ra:.4}");
    }
    if let CfnnModel::Hypernet(spec) = &model {
        let mut rng = root.split(5);
        let mut thetas = Vec::new();
        for _ in 0..100 {
            let (z1, z2, y) = spec.draw_ports(&mut rng);
            thetas.push(spec.generate_theta(&z1, &z2, y).unwrap());
        }
        let dim = thetas[0].len();
        let mut var = 0.0;
        for j in 0..dim {
            let mean: f64 = thetas.iter().map(|t| t[j]).sum::<f64>() / 100.0;
            var += thetas.iter().map(|t| (t[j] - mean).powi(2)).sum::<f64>() / 100.0;
        }
        println!("theta variance {:.6}", var / dim as f64);
    }

    // per-point draw-correct frequency q(x): ring sweep + disk points
    let q_at = |x: &[f64], y: usize, tag: u64| -> f64 {
        let s = root.split(9000 + tag);
        let mut hit = 0;
        for j in 0..400u64 {
            let mut sj = s.split(j);
            let logits = model.sample_logits(x, &mut sj).unwrap();
            let lab = if logits[1] > logits[0] { 1 } else { 0 };
            if lab == y {
                hit += 1;
            }
        }
        hit as f64 / 400.0
    };
    print!("ring q: ");
    for k in 0..16 {
        let phi = 2.0 * std::f64::consts::PI * k as f64 / 16.0;
        let x = [1.2 * phi.cos(), 1.2 * phi.sin()];
        print!("{:.2} ", q_at(&x, 1, k as u64));
    }
    println!();
    print!("disk q: ");
    for k in 0..8 {
        let phi = 2.0 * std::f64::consts::PI * k as f64 / 8.0;
        let x = [0.3 * phi.cos(), 0.3 * phi.sin()];
        print!("{:.2} ", q_at(&x, 0, 100 + k as u64));
    }
    println!();
}

mod cfnn_harness_tune {
    use cfnn_core::numerics::RngStream;
    use cfnn_core::train::{CfnnModel, CfnnNet, HypernetSpec};

    pub fn build(arch: &str, rng: &mut RngStream) -> cfnn_core::Result<CfnnModel> {
        Ok(match arch {
            "plain" => CfnnModel::Net(
                CfnnNet::builder(2)
                    .dense(16)
                    .tanh()
                    .dense(16)
                    .tanh()
                    .dense(2)
                    .build(rng)?,
            ),
            "dropout" => CfnnModel::Net(
                CfnnNet::builder(2)
                    .dense(32)
                    .tanh()
                    .dropout(0.5)
                    .dense(32)
                    .tanh()
                    .dropout(0.5)
                    .dense(2)
                    .build(rng)?,
            ),
            "hypernet64" => CfnnModel::Hypernet(HypernetSpec::new(2, 2, 4, 4, &[64, 64], rng)?),
            "hypernet2" => CfnnModel::Hypernet(HypernetSpec::new_bounded(2, 2, 1, 1, &[32, 32], 4.0, rng)?),
            "hypernet4" => CfnnModel::Hypernet(HypernetSpec::new_bounded(2, 2, 2, 2, &[32, 32], 4.0, rng)?),
            _ => CfnnModel::Hypernet(HypernetSpec::toy(2, 2, rng)?),
        })
    }
}
