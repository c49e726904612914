// temporary development probe; removed before release
use deformwarp::gan::{build_variant, prepare_sample, TrainSample, Trainer, Variant};
use deformwarp::io::synthetic::{generate_pair_indexed, SyntheticFigureSpec};
use deformwarp::io::write_png;
use std::time::Instant;

fn dataset(n: u64) -> Vec<TrainSample> {
    let spec = SyntheticFigureSpec::default();
    let (gcfg, _) = build_variant(Variant::Full);
    (0..n)
        .map(|i| {
            let pair = generate_pair_indexed(&spec, i).unwrap();
            prepare_sample(pair.x_a, pair.pose_a, pair.x_b, pair.pose_b, &gcfg, 6.0).unwrap()
        })
        .collect()
}

#[test]
fn probe_render_and_speed() {
    let spec = SyntheticFigureSpec::default();
    for i in 0..3 {
        let pair = generate_pair_indexed(&spec, i).unwrap();
        write_png(format!("/tmp/synth_{i}_a.png"), &pair.x_a).unwrap();
        write_png(format!("/tmp/synth_{i}_b.png"), &pair.x_b).unwrap();
    }
    let samples = dataset(8);

    for variant in [Variant::Full, Variant::Baseline] {
        let (gcfg, mut tcfg) = build_variant(variant);
        tcfg.batch_size = 1;
        let mut trainer = Trainer::new(gcfg, tcfg).unwrap();
        let start = Instant::now();
        let iters = 20;
        trainer.run(&samples, iters, |_, _| Ok(())).unwrap();
        let dt = start.elapsed().as_secs_f64();
        eprintln!(
            "{variant:?}: {iters} iters batch=1 in {dt:.2}s -> {:.1} ms/sample-step",
            dt / iters as f64 * 1000.0
        );
    }
    let start = Instant::now();
    let _ = dataset(4);
    eprintln!("prepare_sample: {:.1} ms each", start.elapsed().as_secs_f64() / 4.0 * 1000.0);
}
