// Temporary tuning harness (removed before release).
use std::path::PathBuf;

use fovea_core::framing::Split;
use fovea_core::pipeline::load_dataset;
use fovea_core::scnn::{
    evaluate, rate_predictions, train, Geometry, LifParams, TrainConfig,
};

fn print_stats(dir: &PathBuf) {
    let dataset = load_dataset(dir).unwrap();
    println!("{}: {} frames {}x{}", dir.display(), dataset.frames.count, dataset.frames.height, dataset.frames.width);
    for class in 0..7u8 {
        let idx: Vec<usize> = (0..dataset.labels.len()).filter(|&i| dataset.labels[i] == class).collect();
        if idx.is_empty() {
            println!("  class {class}: NO FRAMES");
            continue;
        }
        let mut nonzero = 0usize;
        let mut total = 0usize;
        let mut sum_abs = 0.0f64;
        let mut peak = 0.0f64;
        for &i in idx.iter().take(20) {
            for &v in dataset.frames.frame(i) {
                total += 1;
                if v != 0.0 {
                    nonzero += 1;
                    sum_abs += f64::from(v.abs());
                    peak = peak.max(f64::from(v.abs()));
                }
            }
        }
        println!(
            "  class {class}: {} frames, {:.1}% nonzero, mean|v| {:.3}, peak {:.3}",
            idx.len(),
            100.0 * nonzero as f64 / total as f64,
            if nonzero > 0 { sum_abs / nonzero as f64 } else { 0.0 },
            peak
        );
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.get(1).map(|s| s == "stats").unwrap_or(false) {
        for dir in &args[2..] {
            print_stats(&PathBuf::from(dir));
        }
        return;
    }
    let dir = PathBuf::from(args.get(1).expect("usage: tune <data-dir> [lr] [amplitude] [gamma] [gamma_final] [epochs]"));
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.2);
    let amplitude: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let gamma: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let gamma_final: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.1);
    let epochs: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(3);
    let v_th: f64 = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(1.0);

    let dataset = load_dataset(&dir).unwrap();
    let lif = LifParams { amplitude, gamma, v_th, ..LifParams::default() };
    let cfg = TrainConfig { epochs, batch_size: 20, learning_rate: lr, seed: 0, gamma_final };
    let t0 = std::time::Instant::now();
    let (params, report) = train(&dataset, &cfg, &lif, Geometry::REDUCED).unwrap();
    println!("train {:.1}s initial {:.4} epochs {:?}", t0.elapsed().as_secs_f64(), report.initial_loss, report.epoch_losses);

    let eval_lif = LifParams { gamma: gamma_final, ..lif };
    // Rate-mode agreement on train and test splits.
    for split in [Split::Train, Split::Test] {
        let preds = rate_predictions(&params, &eval_lif, &dataset, split).unwrap();
        let idx = dataset.indices_of(split);
        let correct = preds.iter().zip(&idx).filter(|(p, &i)| **p == usize::from(dataset.labels[i])).count();
        println!("rate {:?}: {}/{} = {:.1}%", split, correct, idx.len(), 100.0 * correct as f64 / idx.len() as f64);
    }
    let (acc, confusion) = evaluate(&params, &eval_lif, &dataset, Split::Test).unwrap();
    println!("spiking test: {acc:.1}%");
    for (i, row) in confusion.iter().enumerate() {
        println!("  true {i}: {row:?}");
    }
}
