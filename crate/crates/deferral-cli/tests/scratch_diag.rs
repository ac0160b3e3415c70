use rand::Rng;

use deferral::core::argmax_tiebreak;
use deferral::data::gen_class_blobs;
use deferral::experts::{attach_expert_labels, ExpertSpec};
use deferral::losses::LossSelector;
use deferral::optim::{predict_or_defer, train_sgd, Architecture, TrainConfig};
use deferral::rng::stream;

fn tc(loss: LossSelector, seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.05,
        epochs,
        batch_size: 32,
        seed,
        loss,
        cosine_schedule: true,
        ..TrainConfig::default()
    }
}

#[test]
fn diag_k0() {
    for (n_train, epochs) in [(800usize, 80usize), (2000, 80), (2000, 120)] {
        let (mut sys, mut cls, mut head, mut defer) = (0.0, 0.0, 0.0, 0.0);
        let trials = 10u64;
        for trial in 0..trials {
            let seed = stream(0, 60 + trial).gen();
            let all = gen_class_blobs(4, 6, n_train + 400, 3.0, seed).unwrap();
            let train = all.subset(&(0..n_train).collect::<Vec<_>>()).unwrap();
            let test = all.subset(&(n_train..n_train + 400).collect::<Vec<_>>()).unwrap();
            let spec = ExpertSpec::KPerfect { k: 0 };
            let train = attach_expert_labels(&train, &spec, seed.wrapping_add(1)).unwrap();
            let test = attach_expert_labels(&test, &spec, seed.wrapping_add(2)).unwrap();
            let arch = Architecture::OneHidden { width: 16 };
            let dm = train_sgd(&train, arch, &tc(LossSelector::LceAlpha { alpha: 1.0 }, seed.wrapping_add(3), epochs))
                .unwrap()
                .model;
            let cm = train_sgd(&train, arch, &tc(LossSelector::CrossEntropy, seed.wrapping_add(4), epochs))
                .unwrap()
                .model;
            let n = test.len() as f64;
            let (mut s, mut c, mut h, mut d) = (0usize, 0usize, 0usize, 0usize);
            for ex in test.examples() {
                let m = ex.m.unwrap();
                let out = predict_or_defer(&dm, &ex.x, || Ok(m), 0.0).unwrap();
                s += usize::from(out.prediction == ex.y);
                d += usize::from(out.deferred);
                let raw = dm.forward_raw(&ex.x).unwrap();
                h += usize::from(argmax_tiebreak(&raw[..4]).unwrap() == ex.y);
                let rawc = cm.forward_raw(&ex.x).unwrap();
                c += usize::from(argmax_tiebreak(&rawc[..4]).unwrap() == ex.y);
            }
            sys += s as f64 / n;
            cls += c as f64 / n;
            head += h as f64 / n;
            defer += d as f64 / n;
        }
        let t = trials as f64;
        println!(
            "n_train={n_train} epochs={epochs}: system {:.3} classifier {:.3} dm-head {:.3} defer-rate {:.3}",
            sys / t,
            cls / t,
            head / t,
            defer / t
        );
    }
}
