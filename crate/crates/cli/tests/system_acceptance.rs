//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any of them fails.

use std::io::BufReader;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use hybrid_mcmc::fem::{assemble_and_solve, build_mesh, l2_error_against, BoundarySpec, CoefficientField};
use hybrid_mcmc::hybrid::{a_terms, assemble_gaussian, assemble_uniform, select_budget, switching_indicator, GaussianForm};
use hybrid_mcmc::model::{FnPotential, ParameterQoi};
use hybrid_mcmc::oracle::{composite_gauss_legendre, gauss_legendre, QuadratureRule};
use hybrid_mcmc::prior::PriorSpec;
use hybrid_mcmc::rng::rng_from_seed;
use hybrid_mcmc::sampler::{acceptance_probability, propose, run_chain, Chain, ChainConfig, Kernel};
use hybrid_mcmc::stats::{batch_means_se, effective_sample_size, DEFAULT_BATCHES};
use hybrid_mcmc::surrogate::{estimate_epsilon, MlpModel};
use hybrid_mcmc_cli::commands::{run_once, run_repeats, Mode, OutputLayout};
use hybrid_mcmc_cli::{generate_data, train, ExperimentConfig, Report};
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------- 1

fn fem_convergence() -> Outcome {
    let t = Instant::now();
    let errors: Vec<f64> = (3..=6)
        .map(|l| {
            let mesh = build_mesh(l).unwrap();
            let k = CoefficientField::constant(&mesh, 1.0).unwrap();
            let u = assemble_and_solve(&mesh, &k, &|_| 2.0, BoundarySpec::default()).unwrap();
            l2_error_against(&u, |x| x[0] * x[0])
        })
        .collect();
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let min = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    let secs = t.elapsed().as_secs_f64();
    outcome(min >= 1.9 && secs < 60.0, format!("orders {orders:.3?} (min {min:.3} >= 1.9), {secs:.2}s < 60s"))
}

// ---------------------------------------------------------------- 2

fn expect(rule: &QuadratureRule, density: impl Fn(f64) -> f64, phi: impl Fn(f64) -> f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (&z, &w) in rule.nodes.iter().zip(&rule.weights) {
        let r = w * density(z) * (-phi(z)).exp();
        num += r * f(z);
        den += r;
    }
    num / den
}

fn uniform_identity() -> Outcome {
    let rule = gauss_legendre(64, -1.0, 1.0).unwrap();
    let pn = |z: f64| z * z;
    let pm = |z: f64| z * z + 0.1 * z;
    let flat = |_: f64| 1.0;
    let q = |z: f64| z;
    let direct = expect(&rule, flat, pn, q);
    let weighted = expect(&rule, flat, pn, |z| (1.0 - (pn(z) - pm(z)).exp()) * q(z));
    let ratio = expect(&rule, flat, pn, |z| (pn(z) - pm(z)).exp() - 1.0);
    let base = expect(&rule, flat, pm, q);
    let gap = (assemble_uniform(weighted, ratio, base) - direct).abs();
    outcome(gap <= 1e-10, format!("|total - direct| = {gap:.3e} <= 1e-10"))
}

fn gaussian_identity(form: GaussianForm) -> (f64, f64) {
    let rule = composite_gauss_legendre(100, &[-6.0, -3.0, 0.0, 3.0, 6.0]).unwrap();
    let normal = |z: f64| (-0.5 * z * z).exp();
    let pn = |z: f64| 0.5 * z * z;
    let pm = |z: f64| 0.5 * z * z + 0.05 * z.powi(3);
    let q = |z: f64| z;
    let term = |k: usize, z: f64| a_terms(pn(z), pm(z), q(z))[k];
    let a = [
        expect(&rule, normal, pn, |z| term(0, z)),
        expect(&rule, normal, pm, |z| term(1, z)),
        expect(&rule, normal, pm, |z| term(2, z)),
        expect(&rule, normal, pn, |z| term(3, z)),
        expect(&rule, normal, pn, |z| term(4, z)),
        expect(&rule, normal, pm, |z| term(5, z)),
    ];
    let direct = expect(&rule, normal, pn, q);
    let total = assemble_gaussian(form, a, expect(&rule, normal, pm, q));
    (total, direct)
}

fn five_term_identity() -> Outcome {
    let (product, direct) = gaussian_identity(GaussianForm::ProductOfMeans);
    let (consistent, _) = gaussian_identity(GaussianForm::RatioConsistent);
    let gap = (product - direct).abs();
    let gap_rc = (consistent - direct).abs();
    outcome(
        gap <= 1e-8,
        format!(
            "product-of-means form |total - direct| = {gap:.3e} (limit 1e-8); ratio-consistent form {gap_rc:.3e}"
        ),
    )
}

// ---------------------------------------------------------------- shared experiment

/// One-parameter elliptic experiment with a level-5 numerical model.
fn experiment() -> Value {
    json!({
        "problem": "elliptic_uniform",
        "level": 5,
        "prior": { "type": "uniform", "bounds": [[0.0, 1.0]] },
        "observations": { "sigma2": 0.001, "truth_seed": 2024, "noise_seed": 7, "level": 10 },
        "dataset": { "count": 2000, "seed": 11 },
        "surrogate": { "kind": "mlp", "hidden": [16, 16], "epochs": 100, "seed": 12 },
        "error_estimate": { "reference_level": 8, "draws": 16, "seed": 13 },
        "chains": {
            "kernel": { "type": "rw_reflect", "step": 0.3 },
            "numerical": { "length": 4000, "seed": 21 },
            "ml": { "length": 100000, "seed": 22 },
            "hybrid": { "seed": 23, "m_num": 4000 }
        },
        "quadrature": { "points": 32, "level": 10 }
    })
}

fn config(v: &Value) -> ExperimentConfig {
    ExperimentConfig::from_json(&v.to_string()).unwrap()
}

fn quadrature(cfg: &ExperimentConfig, level: u32, out: &OutputLayout) -> f64 {
    let mut c = cfg.clone();
    c.quadrature.level = level;
    run_once(&c, Mode::Quadrature, out, None).unwrap().qoi_estimate[0]
}

/// Mean of the repeat estimates and the standard error of that mean.
fn pooled(reports: &[Report]) -> (f64, f64) {
    let n = reports.len() as f64;
    let mean = reports.iter().map(|r| r.qoi_estimate[0]).sum::<f64>() / n;
    let se = reports.iter().map(|r| r.standard_error[0].powi(2)).sum::<f64>().sqrt() / n;
    (mean, se)
}

// ---------------------------------------------------------------- 3

fn degenerate_surrogate(dir: &Path) -> Outcome {
    let mut v = experiment();
    v["level"] = json!(3);
    v["surrogate"] = json!({ "kind": "numerical", "level": 3 });
    v["chains"]["ml"]["length"] = json!(5000);
    v["chains"]["hybrid"]["m_num"] = json!(500);
    let cfg = config(&v);
    let out = OutputLayout::new(dir);
    let ml = run_once(&cfg, Mode::Ml, &out, None).unwrap();
    let hy = run_once(&cfg, Mode::Hybrid, &out, None).unwrap();
    let est = &hy.details["estimate"];
    let zero = est["term_weighted"].as_array().unwrap().iter().all(|x| x.as_f64() == Some(0.0))
        && est["term_ratio"].as_f64() == Some(0.0);
    let exact = ml.qoi_estimate == hy.qoi_estimate;
    outcome(
        exact && zero,
        format!(
            "hybrid {:?} vs ml {:?}, corrections zero: {zero}",
            hy.qoi_estimate, ml.qoi_estimate
        ),
    )
}

// ---------------------------------------------------------------- 4, 5

fn epsilon_reproduction() -> Outcome {
    let e = estimate_epsilon(3.132e-4, 5.576e-5).unwrap().epsilon;
    outcome((e - 2.49).abs() <= 0.01, format!("epsilon = {e:.4} (2.49 +- 0.01)"))
}

fn budget_formulas() -> Outcome {
    let b = select_budget(5, 0.0, 1.0).unwrap();
    let c = select_budget(4, 2.0, 3.0).unwrap();
    let pass = b.m_ml == 1024 && b.m_num == 4 && c.m_ml == 768 && c.m_num == 75;
    outcome(
        pass,
        format!("L=5 eps=0 C=1: {}/{}; L=4 eps=2 C=3: {}/{}", b.m_ml, b.m_num, c.m_ml, c.m_num),
    )
}

// ---------------------------------------------------------------- 6

fn reference_experiment(dir: &Path) -> Outcome {
    let cfg = config(&experiment());
    let out = OutputLayout::new(dir);
    let t = Instant::now();
    generate_data(&cfg, &out).unwrap();
    let trained = train(&cfg, &out).unwrap();
    let eps = trained.error_estimate.map_or(f64::NAN, |e| e.epsilon);

    let q10 = quadrature(&cfg, 10, &out);
    let q5 = quadrature(&cfg, 5, &out);
    let (num_reports, _) = run_repeats(&cfg, Mode::Numerical, &out, 5).unwrap();
    let (num_mean, num_se) = pooled(&num_reports);
    let (ml_reports, _) = run_repeats(&cfg, Mode::Ml, &out, 5).unwrap();
    let (hy_reports, _) = run_repeats(&cfg, Mode::Hybrid, &out, 5).unwrap();
    let (ml_mean, ml_se) = pooled(&ml_reports);
    let (hy_mean, hy_se) = pooled(&hy_reports);

    let num_gap = (num_mean - q10).abs();
    let hy_gap = (hy_mean - q10).abs();
    let ml_gap = (ml_mean - q10).abs();
    let num_ok = num_gap <= 3.0 * num_se && num_gap <= 5e-3;
    let hy_ok = hy_gap <= (3.0 * hy_se).max(ml_gap);
    // surrogate visibly off, hybrid back next to the numerical chain
    let pattern = ml_gap > 3.0 * ml_se && (hy_mean - num_mean).abs() < (ml_mean - num_mean).abs();
    outcome(
        num_ok && hy_ok && pattern,
        format!(
            "quad L=10 {q10:.4}, quad L=5 {q5:.4}, numerical {num_mean:.4} (se {num_se:.1e}), \
             ml {ml_mean:.4} (se {ml_se:.1e}), hybrid {hy_mean:.4} (se {hy_se:.1e}); \
             surrogate eps {eps:.2}; {:.0}s",
            t.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 7

fn coarse_surrogate(dir: &Path) -> Outcome {
    let mut v = experiment();
    v["surrogate"] = json!({ "kind": "numerical", "level": 3 });
    v["chains"]["ml"]["length"] = json!(20000);
    v["quadrature"]["level"] = json!(5);
    let cfg = config(&v);
    let out = OutputLayout::new(dir);
    let reference = quadrature(&cfg, 5, &out);
    let (reports, _) = run_repeats(&cfg, Mode::Hybrid, &out, 5).unwrap();
    let z: Vec<f64> = reports
        .iter()
        .map(|r| (r.qoi_estimate[0] - reference) / r.standard_error[0])
        .collect();
    let inside = z.iter().filter(|s| s.abs() <= 3.0).count();
    let coarse = run_once(&cfg, Mode::Ml, &out, None).unwrap();
    let coarse_z = (coarse.qoi_estimate[0] - reference) / coarse.standard_error[0];
    outcome(
        inside >= 4 && coarse_z.abs() > 3.0,
        format!(
            "reference {reference:.4}; hybrid z-scores {z:.2?} ({inside}/5 within 3); \
             level-3 chain {:.4}, z = {coarse_z:.1}",
            coarse.qoi_estimate[0]
        ),
    )
}

// ---------------------------------------------------------------- 8

fn kernel_correctness() -> Outcome {
    let phi: [f64; 5] = [0.3, 1.7, -0.4, 2.2, 0.9];
    let norm: f64 = phi.iter().map(|p| (-p).exp()).sum();
    let pi: Vec<f64> = phi.iter().map(|p| (-p).exp() / norm).collect();
    let mut p = [[0.0; 5]; 5];
    for i in 0..5 {
        for j in [(i + 1) % 5, (i + 4) % 5] {
            p[i][j] = 0.5 * acceptance_probability(phi[i], phi[j]);
        }
        p[i][i] = 1.0 - p[i].iter().sum::<f64>();
    }
    let tv = (0..5)
        .map(|j| ((0..5).map(|i| pi[i] * p[i][j]).sum::<f64>() - pi[j]).abs())
        .sum::<f64>()
        / 2.0;

    let prior = PriorSpec::gaussian_sin_decay(3);
    let zero = FnPotential(|_: &[f64]| 0.0);
    let chain = run_chain(&zero, &prior, &ChainConfig::new(Kernel::Pcn { beta: 0.2 }, 40_000, 12), &ParameterQoi { dim: 3 })
        .unwrap();
    let mut moments_ok = true;
    for c in 0..3 {
        let xs = chain.qoi_series(c);
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let se_m = (v / effective_sample_size(&xs).unwrap()).sqrt();
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let v0 = sq.iter().sum::<f64>() / n;
        moments_ok &= m.abs() < 3.0 * se_m && (v0 - 1.0).abs() < 3.0 * batch_means_se(&sq, DEFAULT_BATCHES);
    }

    let uniform = PriorSpec::uniform(vec![[0.0, 1.0]]);
    let kernel = Kernel::RwReflect { step: 0.3 };
    let mut rng = rng_from_seed(31);
    const B: usize = 10;
    let mut h = [[0u32; B]; B];
    for _ in 0..1_000_000 {
        let z = uniform.draw(&mut rng);
        let zp = propose(&kernel, &z, &mut rng).unwrap();
        let bin = |v: f64| ((v * B as f64) as usize).min(B - 1);
        h[bin(z.values()[0])][bin(zp.values()[0])] += 1;
    }
    let symmetric = (0..B).all(|i| {
        (i + 1..B).all(|j| {
            let (a, b) = (h[i][j] as f64, h[j][i] as f64);
            (a - b).abs() <= 4.0 * (a + b).sqrt().max(1.0)
        })
    });
    outcome(
        tv < 1e-12 && moments_ok && symmetric,
        format!("TV {tv:.1e}; pCN prior moments within 3 SE: {moments_ok}; reflected walk symmetric: {symmetric}"),
    )
}

// ---------------------------------------------------------------- 9

fn branch_boundedness() -> Outcome {
    let mut rng = rng_from_seed(99);
    let mut bad = 0usize;
    for _ in 0..100_000 {
        let pn: f64 = 20.0 * rng.random::<f64>() - 5.0;
        let pm: f64 = 20.0 * rng.random::<f64>() - 5.0;
        let q: f64 = rng.sample::<f64, _>(StandardNormal) * 3.0;
        let i = switching_indicator(pn, pm) as f64;
        let w = a_terms(pn, pm, 1.0);
        let a = a_terms(pn, pm, q);
        let weights_ok = [0, 1, 4, 5].iter().all(|&k| w[k] > -1.0 && w[k] <= 1.0) && a.iter().all(|x| x.is_finite());
        if !weights_ok || i + (1.0 - i) != 1.0 {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{bad} of 100000 triples out of bounds"))
}

// ---------------------------------------------------------------- 10

fn persistence(dir: &Path) -> Outcome {
    let mut v = experiment();
    v["level"] = json!(3);
    v["observations"]["level"] = json!(3);
    v["dataset"]["count"] = json!(100);
    v["chains"]["numerical"]["length"] = json!(1000);
    v["chains"]["ml"]["length"] = json!(3000);
    v["chains"]["hybrid"]["m_num"] = json!(300);
    v["error_estimate"] = Value::Null;
    let cfg = config(&v);
    let out = OutputLayout::new(dir);
    generate_data(&cfg, &out).unwrap();
    train(&cfg, &out).unwrap();

    let bytes = std::fs::read(out.model()).unwrap();
    let model = MlpModel::load(&out.model()).unwrap();
    let model_ok = model.to_bytes() == bytes && MlpModel::from_bytes(&bytes).unwrap() == model;

    let written = run_once(&cfg, Mode::Hybrid, &out, Some(&out.mode_dir(Mode::Hybrid))).unwrap();
    let d = out.mode_dir(Mode::Hybrid);
    let summary = serde_json::from_str(&std::fs::read_to_string(d.join("chain_numerical.json")).unwrap()).unwrap();
    let file = std::fs::File::open(d.join("chain_numerical.csv")).unwrap();
    let chain = Chain::read_csv(BufReader::new(file), &cfg.prior, &summary).unwrap();
    let mut again = Vec::new();
    chain.write_csv(&mut again).unwrap();
    let chain_ok = again == std::fs::read(d.join("chain_numerical.csv")).unwrap()
        && chain.summary().unwrap() == summary;

    // rerun from the config embedded in the written report
    let text = std::fs::read_to_string(d.join("report.json")).unwrap();
    let report = Report::read(&d.join("report.json")).unwrap();
    let regenerated = run_once(&report.provenance.config, Mode::Hybrid, &out, None).unwrap();
    let report_ok = regenerated.to_json() == text && written == regenerated;

    outcome(
        model_ok && chain_ok && report_ok,
        format!("model {model_ok}, chain {chain_ok}, report {report_ok}"),
    )
}

fn main() -> ExitCode {
    let root = tempfile::tempdir().unwrap();
    let sub = |name: &str| {
        let p = root.path().join(name);
        std::fs::create_dir_all(&p).unwrap();
        p
    };
    let checks: Vec<(&str, Box<dyn FnOnce() -> Outcome>)> = vec![
        ("1 fem convergence", Box::new(fem_convergence)),
        ("2a uniform estimator identity", Box::new(uniform_identity)),
        ("2b five-term gaussian identity", Box::new(five_term_identity)),
        ("3 degenerate surrogate", Box::new({
            let d = sub("c3");
            move || degenerate_surrogate(&d)
        })),
        ("4 epsilon estimate", Box::new(epsilon_reproduction)),
        ("5 budget formulas", Box::new(budget_formulas)),
        ("6 reference experiment", Box::new({
            let d = sub("c6");
            move || reference_experiment(&d)
        })),
        ("7 coarse model as surrogate", Box::new({
            let d = sub("c7");
            move || coarse_surrogate(&d)
        })),
        ("8 kernel correctness", Box::new(kernel_correctness)),
        ("9 gaussian branch boundedness", Box::new(branch_boundedness)),
        ("10 persistence round trips", Box::new({
            let d = sub("c10");
            move || persistence(&d)
        })),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let o = check();
        println!("criterion {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{failed} failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
