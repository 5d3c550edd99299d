//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use risgan_core::baselines::{ls_comm, ls_sensing, LsEstimator};
use risgan_core::cgan::{build_ce_cgan, build_cgan, build_se_cgan, generator_objective, CganModel};
use risgan_core::channel::{draw_comm_channels, draw_sensing_channel, CMatrix, SystemConfig};
use risgan_core::complexity::{complexity_ce, complexity_se, CeSizes};
use risgan_core::dataset::Link;
use risgan_core::harness::{self, CsvReport, Profile, RunConfig};
use risgan_core::metrics::{nmse, nmse_mc, Scenario};
use risgan_core::nn::OpCount;
use risgan_core::pilot::{build_phase_matrix, build_pilot_matrix, hermitian, synthesize_ue_rx};
use risgan_core::rng::{stream_rng, Stream};

const ORTHOGONALITY_TOL: f64 = 1e-10;
const LAYER_GRAD_TOL: f64 = 1e-5;
const END_TO_END_GRAD_TOL: f64 = 1e-4;
const GRAD_TRIALS: usize = 50;
const LS_EXACT_TOL: f64 = 1e-9;
const LS_MC_REL_TOL: f64 = 0.03;
const LS_MC_TRIALS: usize = 10_000;
const TRAINING_GAIN: f64 = 10.0;
const TREND_GAIN: f64 = 10.0;
const GENERALIZATION_CEILING: f64 = 1.0;
const SEEDS: [u64; 3] = [1, 2, 3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, outcome: &Outcome, started: Instant) {
    println!(
        "[{}] criterion {id}: {name} ({}; {:.1}s)",
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.detail,
        started.elapsed().as_secs_f64()
    );
}

fn gram_error(a: &CMatrix, scale: f64) -> f64 {
    let gram = a.dot(&hermitian(a));
    let n = gram.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let expected = if i == j { scale } else { 0.0 };
            worst = worst.max((gram[(i, j)] - Complex64::new(expected, 0.0)).norm() / scale);
        }
    }
    worst
}

fn criterion_orthogonality() -> Outcome {
    let power = SystemConfig::default().tx_power_linear();
    let mut worst = 0.0f64;
    for m in 1..=16 {
        let x = build_pilot_matrix(m, m, power).unwrap();
        worst = worst.max(gram_error(&x.x, power));
    }
    for n in 4..=64 {
        let theta = build_phase_matrix(n, n).unwrap();
        worst = worst.max(gram_error(&theta.theta, n as f64));
    }
    Outcome {
        pass: worst <= ORTHOGONALITY_TOL,
        detail: format!("max relative error {worst:.2e}"),
    }
}

/// Central differences of the generator objective on a few entries of every
/// generator tensor.
fn end_to_end_error(model: &CganModel, rng: &mut ChaCha8Rng) -> f64 {
    let batch = 4;
    let inputs = Array2::from_shape_fn((batch, model.generator.spec.input_size()), |_| {
        rng.random_range(-1.5..1.5)
    });
    let targets = Array2::from_shape_fn((batch, model.generator.spec.output_size()), |_| {
        rng.random_range(-1.0..1.0)
    });
    let alpha = 100.0;
    let (_, grads) = generator_objective(model, &inputs, &targets, alpha).unwrap();
    let mut worst = 0.0f64;
    let tensors = model.generator.params.trainable().len();
    for t in 0..tensors {
        let len = model.generator.params.trainable()[t].len();
        for _ in 0..3 {
            let i = rng.random_range(0..len);
            let mut probe = model.clone();
            let x0 = probe.generator.params.trainable()[t][i];
            let numeric = common::central_difference(
                |v| {
                    probe.generator.params.trainable_mut()[t][i] = v;
                    generator_objective(&probe, &inputs, &targets, alpha)
                        .unwrap()
                        .0
                },
                x0,
            );
            worst = worst.max(common::rel_err(grads.trainable()[t][i], numeric));
        }
    }
    worst
}

fn criterion_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut layer_worst = 0.0f64;
    for kind in common::LAYER_KINDS {
        for trial in 0..GRAD_TRIALS {
            let (spec, x) = common::random_layer_case(kind, &mut rng);
            let params = common::randomized_params(&spec, &mut rng);
            layer_worst = layer_worst.max(common::network_gradient_error(
                &spec,
                &params,
                &x,
                trial as u64,
            ));
        }
    }
    let tiny = SystemConfig::new(2, 4, 1).unwrap();
    let mut e2e_worst = 0.0f64;
    for trial in 0..GRAD_TRIALS {
        let mut model = if trial % 2 == 0 {
            build_se_cgan(&tiny, &mut rng).unwrap()
        } else {
            build_ce_cgan(&tiny, &mut rng).unwrap()
        };
        // Non-trivial batchnorm affine parameters in both networks.
        for net in [&mut model.generator, &mut model.discriminator] {
            for t in net.params.trainable_mut() {
                for v in t.iter_mut() {
                    *v += rng.random_range(-0.1..0.1);
                }
            }
        }
        e2e_worst = e2e_worst.max(end_to_end_error(&model, &mut rng));
    }
    Outcome {
        pass: layer_worst < LAYER_GRAD_TOL && e2e_worst < END_TO_END_GRAD_TOL,
        detail: format!(
            "layers {layer_worst:.2e} over {} cases, end-to-end {e2e_worst:.2e} over {GRAD_TRIALS} cases",
            common::LAYER_KINDS.len() * GRAD_TRIALS
        ),
    }
}

fn criterion_ls() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut exact_worst = 0.0f64;
    for &(m, n) in &[(1, 4), (2, 4), (4, 30), (8, 16), (16, 64), (64, 4), (4, 64)] {
        let config = SystemConfig::new(m, n, 1).unwrap();
        let x = build_pilot_matrix(m, m, config.tx_power_linear()).unwrap();
        let a = draw_sensing_channel(&config, &mut rng).unwrap().matrix;
        let est = ls_sensing(&hermitian(&a).dot(&x.x), &x).unwrap();
        exact_worst = exact_worst.max(nmse(&est, &a).unwrap());
        let theta = build_phase_matrix(n, n).unwrap();
        let g = draw_comm_channels(&config, &mut rng).unwrap().g.remove(0);
        let y = synthesize_ue_rx(&g, &theta, &x, 0.0, &mut rng).unwrap();
        let est = ls_comm(&y.y, &theta, &x).unwrap();
        exact_worst = exact_worst.max(nmse(&est, &g).unwrap());
    }

    let config = SystemConfig::default();
    let ls = LsEstimator::new(&config, Link::Sensing).unwrap();
    let mut mc_worst = 0.0f64;
    for (i, snr) in [0.0, 10.0, 20.0].into_iter().enumerate() {
        let scenario = Scenario {
            config: config.clone(),
            link: Link::Sensing,
            user: 0,
            snr_db: snr,
        };
        let measured = nmse_mc(&ls, &scenario, LS_MC_TRIALS, 31, i).unwrap();
        // M²σ²/(C·P_tx·‖A‖²) with σ² = ‖A‖²/(M²·snr).
        let a = draw_sensing_channel(&config, &mut rng).unwrap().matrix;
        let norm2: f64 = a.iter().map(|z| z.norm_sqr()).sum();
        let m = config.m as f64;
        let sigma2 = norm2 / (m * m) / 10f64.powf(snr / 10.0);
        let analytic = m * m * sigma2 / (config.c() as f64 * config.tx_power_linear() * norm2);
        mc_worst = mc_worst.max((measured / analytic - 1.0).abs());
    }
    Outcome {
        pass: exact_worst <= LS_EXACT_TOL && mc_worst <= LS_MC_REL_TOL,
        detail: format!(
            "noiseless NMSE {exact_worst:.2e}, Monte-Carlo deviation {:.2}%",
            100.0 * mc_worst
        ),
    }
}

fn criterion_complexity() -> Outcome {
    // M=4 by hand: G is 32->100->200->32, D is 32->100->200->1.
    let mut ok = complexity_se(4).total
        == OpCount {
            additions: 53633,
            multiplications: 53000,
        };
    let mut notes = Vec::new();
    for m in [2, 4, 8, 16] {
        let config = SystemConfig::new(m, 30, 1).unwrap();
        let g =
            harness::counted_ops(&risgan_core::cgan::se_generator_spec(&config).unwrap()).unwrap();
        let d = harness::counted_ops(&risgan_core::cgan::se_discriminator_spec(&config).unwrap())
            .unwrap();
        let closed = complexity_se(m);
        let same = closed.generator == g && closed.discriminator == d && closed.total == g + d;
        ok &= same;
        if !same {
            notes.push(format!("SE M={m} differs"));
        }
    }
    let config = SystemConfig::default();
    let g = harness::counted_ops(&risgan_core::cgan::ce_generator_spec(&config).unwrap()).unwrap();
    let d =
        harness::counted_ops(&risgan_core::cgan::ce_discriminator_spec(&config).unwrap()).unwrap();
    let closed = complexity_ce(&CeSizes::for_system(config.m, config.n)).unwrap();
    let ce_same = closed.generator == g && closed.discriminator == d && closed.total == g + d;
    ok &= ce_same;
    if !ce_same {
        notes.push("CE differs".into());
    }
    Outcome {
        pass: ok,
        detail: if notes.is_empty() {
            format!(
                "SE M=4 totals ({}, {}), CE totals ({}, {})",
                complexity_se(4).total.additions,
                complexity_se(4).total.multiplications,
                closed.total.additions,
                closed.total.multiplications
            )
        } else {
            notes.join(", ")
        },
    }
}

struct PipelineRun {
    config: RunConfig,
    report: CsvReport,
    bytes: Vec<u8>,
    split_bytes: Vec<u8>,
}

fn run_pipeline(seed: u64, dir: &Path) -> PipelineRun {
    let config = harness::parse_config(
        None,
        Profile::Desk,
        &[
            ("seed".to_string(), seed.to_string()),
            ("link".to_string(), "sensing".to_string()),
        ],
    )
    .unwrap();
    harness::cmd_generate(&config, dir).unwrap();
    harness::cmd_train(&config, dir).unwrap();
    let paths = harness::cmd_evaluate(&config, dir).unwrap();
    let bytes = std::fs::read(&paths[0]).unwrap();
    let split_bytes = std::fs::read(&paths[1]).unwrap();
    let report = CsvReport::parse(std::str::from_utf8(&bytes).unwrap()).unwrap();
    PipelineRun {
        config,
        report,
        bytes,
        split_bytes,
    }
}

/// NMSE per SNR for one method, in report order.
fn curve(report: &CsvReport, method: &str) -> Vec<(f64, f64)> {
    let m = report.column("method").unwrap();
    let s = report.column("snr_db").unwrap();
    let v = report.column("nmse").unwrap();
    report
        .rows
        .iter()
        .filter(|r| r[m] == method)
        .map(|r| (r[s].parse().unwrap(), r[v].parse().unwrap()))
        .collect()
}

fn at(curve: &[(f64, f64)], snr: f64) -> f64 {
    curve
        .iter()
        .find(|(s, _)| *s == snr)
        .map(|(_, v)| *v)
        .unwrap()
}

fn median3(values: &[f64]) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            if i == 0 || i + 1 == values.len() {
                values[i]
            } else {
                let mut w = [values[i - 1], values[i], values[i + 1]];
                w.sort_by(|a, b| a.partial_cmp(b).unwrap());
                w[1]
            }
        })
        .collect()
}

fn untrained_nmse(config: &RunConfig, snr: f64) -> f64 {
    let mut init = stream_rng(config.seed(), Stream::Init, 0);
    let model = build_cgan(&config.system, config.link, &mut init).unwrap();
    let index = config.test_snr_db.iter().position(|&s| s == snr).unwrap();
    let scenario = Scenario {
        config: config.system.clone(),
        link: config.link,
        user: config.user,
        snr_db: snr,
    };
    nmse_mc(&model, &scenario, config.trials, config.seed(), index).unwrap()
}

fn main() {
    let mut all_pass = true;
    let mut record = |id: usize, name: &str, outcome: Outcome, started: Instant| {
        report(id, name, &outcome, started);
        all_pass &= outcome.pass;
    };

    let t = Instant::now();
    record(
        1,
        "pilot and phase orthogonality",
        criterion_orthogonality(),
        t,
    );
    let t = Instant::now();
    record(2, "gradient correctness", criterion_gradients(), t);
    let t = Instant::now();
    record(3, "least-squares oracle", criterion_ls(), t);
    let t = Instant::now();
    record(4, "complexity parity", criterion_complexity(), t);

    let t = Instant::now();
    let root = tempfile::tempdir().unwrap();
    let first = run_pipeline(SEEDS[0], &root.path().join("a"));
    let cgan = curve(&first.report, "se_cgan");
    let ls = curve(&first.report, "ls");
    let trained_10 = at(&cgan, 10.0);
    let untrained_10 = untrained_nmse(&first.config, 10.0);
    let (cgan_m5, ls_m5) = (at(&cgan, -5.0), at(&ls, -5.0));
    record(
        5,
        "desk training efficacy (sensing)",
        Outcome {
            pass: trained_10 * TRAINING_GAIN <= untrained_10 && cgan_m5 < ls_m5,
            detail: format!(
                "10 dB: trained {trained_10:.4} vs untrained {untrained_10:.4}; -5 dB: CGAN {cgan_m5:.4} vs LS {ls_m5:.4}"
            ),
        },
        t,
    );

    let values: Vec<f64> = cgan.iter().map(|(_, v)| *v).collect();
    let smooth = median3(&values);
    let monotone = smooth.windows(2).all(|w| w[1] <= w[0]);
    let (low, high) = (values[0], values[values.len() - 1]);
    record(
        6,
        "NMSE-vs-SNR trend",
        Outcome {
            pass: cgan.len() == 17 && monotone && high * TREND_GAIN <= low,
            detail: format!(
                "{} points, smoothed monotone: {monotone}, NMSE(-10 dB) {low:.4}, NMSE(30 dB) {high:.4}",
                cgan.len()
            ),
        },
        t,
    );

    let worst = values.iter().cloned().fold(0.0f64, f64::max);
    let finite = values.iter().all(|v| v.is_finite());
    record(
        7,
        "generalization beyond the training SNRs",
        Outcome {
            pass: finite && worst <= GENERALIZATION_CEILING,
            detail: format!("max NMSE over the test grid {worst:.4}"),
        },
        t,
    );

    let t8 = Instant::now();
    let mut wins = 0;
    let mut notes = Vec::new();
    for (i, &seed) in SEEDS.iter().enumerate() {
        let run = if i == 0 {
            None
        } else {
            Some(run_pipeline(seed, &root.path().join(format!("seed{seed}"))))
        };
        let rep = run.as_ref().map_or(&first.report, |r| &r.report);
        let c = at(&curve(rep, "se_cgan"), -5.0);
        let f = at(&curve(rep, "ffn"), -5.0);
        if c < f {
            wins += 1;
        }
        notes.push(format!("seed {seed}: CGAN {c:.4} vs FFN {f:.4}"));
    }
    record(
        8,
        "low-SNR ordering against the FFN",
        Outcome {
            pass: wins * 2 > SEEDS.len(),
            detail: format!("{wins}/{} seeds; {}", SEEDS.len(), notes.join("; ")),
        },
        t8,
    );

    let t = Instant::now();
    let second = run_pipeline(SEEDS[0], &root.path().join("b"));
    let identical = first.bytes == second.bytes && first.split_bytes == second.split_bytes;
    record(
        9,
        "determinism",
        Outcome {
            pass: identical,
            detail: format!(
                "{} and {} report bytes identical: {identical}",
                first.bytes.len(),
                first.split_bytes.len()
            ),
        },
        t,
    );

    if !all_pass {
        std::process::exit(1);
    }
}
