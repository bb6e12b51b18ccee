//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! (with indented details) and exits non-zero if any criterion fails.
//!
//! Oracles here are written independently of the library: naive loops,
//! dense Gaussian elimination, adaptive quadrature, closed-form CDFs.

use rand::Rng;
use sacheck::copula::{cdf, density, h_function, sample, CopulaParam, UnitPair};
use sacheck::sa_tests::chisq_statistic;
use sacheck::sim::BenchResult;
use sacheck::stats::kendall_tau;
use sacheck::{
    ccvml, chisq_test, cvml, permutation_test, run_bench, substream, waic, BenchMethod, BenchSpec, DrawsMatrix,
    ScenarioId,
};
use std::process::Command;
use std::time::Instant;

const SEED: u64 = 20_240_501;

struct Outcome {
    pass: bool,
    details: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { pass: true, details: Vec::new() }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.details.push(format!("{} {line}", if ok { "ok " } else { "BAD" }));
    }
}

// ---------------------------------------------------------------- criterion 1

fn naive_cvml(m: usize, n: usize, l: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..n {
        let mut s = 0.0;
        for t in 0..m {
            s += (-l[t * n + i]).exp();
        }
        total -= (s / m as f64).ln();
    }
    total
}

fn naive_ccvml(m: usize, n: usize, l: &[f64], m1: &[f64], m2: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..n {
        let mut a = 0.0;
        let mut b = 0.0;
        for t in 0..m {
            a += (m2[t * n + i] - l[t * n + i]).exp();
            b += (m1[t * n + i] - l[t * n + i]).exp();
        }
        total += (a / m as f64).ln() + (b / m as f64).ln();
    }
    -0.5 * total
}

fn naive_waic(m: usize, n: usize, l: &[f64]) -> f64 {
    let mut fit = 0.0;
    let mut pen = 0.0;
    for i in 0..n {
        let mut s = 0.0;
        let mut mean = 0.0;
        for t in 0..m {
            s += l[t * n + i].exp();
            mean += l[t * n + i];
        }
        mean /= m as f64;
        let mut v = 0.0;
        for t in 0..m {
            v += (l[t * n + i] - mean).powi(2);
        }
        fit += (s / m as f64).ln();
        pen += v / (m - 1) as f64;
    }
    -2.0 * fit + 2.0 * pen
}

/// `x = M⁻¹ b` by Gauss–Jordan elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

fn dense_chisq(rho: &[f64], n_tilde: usize) -> f64 {
    let k = rho.len();
    let sigma: Vec<f64> = rho.iter().map(|r| (1.0 - r * r).powi(2)).collect();
    // A is (K-1)×K with rows e_{i+1} - e_i.
    let a: Vec<Vec<f64>> = (0..k - 1)
        .map(|i| (0..k).map(|j| if j == i + 1 { 1.0 } else if j == i { -1.0 } else { 0.0 }).collect())
        .collect();
    let mut asa = vec![vec![0.0; k - 1]; k - 1];
    for r in 0..k - 1 {
        for c in 0..k - 1 {
            asa[r][c] = (0..k).map(|j| a[r][j] * sigma[j] * a[c][j]).sum();
        }
    }
    let ar: Vec<f64> = a.iter().map(|row| row.iter().zip(rho).map(|(x, y)| x * y).sum()).collect();
    let sol = dense_solve(asa, ar.clone());
    n_tilde as f64 * ar.iter().zip(&sol).map(|(x, y)| x * y).sum::<f64>()
}

fn criterion_1() -> Outcome {
    let mut out = Outcome::new();
    let mut rng = substream(SEED, "acceptance-1", &[]);
    let (m, n) = (5, 7);
    let mut worst = [0.0f64; 3];
    for _ in 0..100 {
        let l: Vec<f64> = (0..m * n).map(|_| rng.random_range(-3.0..1.0)).collect();
        let m1: Vec<f64> = (0..m * n).map(|_| rng.random_range(-2.0..0.5)).collect();
        let m2: Vec<f64> = (0..m * n).map(|_| rng.random_range(-2.0..0.5)).collect();
        let d = DrawsMatrix::new(m, n, l.clone(), m1.clone(), m2.clone()).unwrap();
        worst[0] = worst[0].max((cvml(&d) - naive_cvml(m, n, &l)).abs());
        worst[1] = worst[1].max((ccvml(&d).unwrap() - naive_ccvml(m, n, &l, &m1, &m2)).abs());
        worst[2] = worst[2].max((waic(&d).unwrap().waic - naive_waic(m, n, &l)).abs());
    }
    for (name, w) in ["cvml", "ccvml", "waic"].iter().zip(worst) {
        out.check(w <= 1e-12, format!("{name}: max |lib - naive| = {w:.2e} over 100 random 5x7 matrices (tol 1e-12)"));
    }

    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(2..=6);
        let rho: Vec<f64> = (0..k).map(|_| rng.random_range(-0.95..0.95)).collect();
        let n_tilde = rng.random_range(20..400);
        let (t, _) = chisq_statistic(&rho, n_tilde).unwrap();
        let oracle = dense_chisq(&rho, n_tilde);
        worst = worst.max((t - oracle).abs() / oracle.abs().max(1.0));
    }
    out.check(worst <= 1e-10, format!("chisq statistic: max deviation from dense evaluation = {worst:.2e} (tol 1e-10)"));
    out
}

// ---------------------------------------------------------------- criterion 2

fn simpson_adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `∫∫ c(u1, u2) du1 du2` over `[1e-12, 1 - 1e-12]²`, substituting `u = e^{-s}` so the
/// lower-tail ridge of the density is resolved on a finite interval. The
/// excluded strips carry at most `4e-12` of the mass.
fn density_integral(theta: f64) -> f64 {
    let c = CopulaParam::clayton(theta).unwrap();
    let (s_min, s_max) = (1e-12, -(1e-12f64).ln());
    let g = |s1: f64, s2: f64| {
        let (u1, u2) = ((-s1).exp(), (-s2).exp());
        density(UnitPair::new(u1, u2).unwrap(), c).unwrap() * u1 * u2
    };
    let inner = |s2: f64| {
        simpson_adaptive(&|s1| g(s1, s2), s_min, s2, 1e-11) + simpson_adaptive(&|s1| g(s1, s2), s2, s_max, 1e-11)
    };
    simpson_adaptive(&inner, s_min, s_max, 1e-10)
}

fn clayton_cdf(u: f64, v: f64, theta: f64) -> f64 {
    (u.powf(-theta) + v.powf(-theta) - 1.0).powf(-1.0 / theta)
}

fn criterion_2() -> Outcome {
    let mut out = Outcome::new();
    for theta in [0.5, 2.0, 8.0] {
        let total = density_integral(theta);
        out.check((total - 1.0).abs() <= 1e-6, format!("θ={theta}: ∫∫c = {total:.10} (tol 1e-6)"));
    }

    let mut worst = 0.0f64;
    for i in 1..940 {
        let tau = 0.01 + i as f64 * 1e-3;
        let c = sacheck::copula::tau_to_theta(tau).unwrap();
        worst = worst.max((sacheck::copula::theta_to_tau(c) - tau).abs());
    }
    out.check(worst <= 1e-10, format!("τ→θ→τ round trip on (0.01, 0.95): max error {worst:.2e} (tol 1e-10)"));

    let mut worst = 0.0f64;
    let step = 1e-5;
    for theta in [0.5, 2.0, 8.0] {
        let c = CopulaParam::clayton(theta).unwrap();
        for i in 1..20 {
            for j in 1..20 {
                let (u1, u2) = (i as f64 / 20.0, j as f64 / 20.0);
                let fd = (clayton_cdf(u1, u2 + step, theta) - clayton_cdf(u1, u2 - step, theta)) / (2.0 * step);
                worst = worst.max((h_function(u1, u2, c).unwrap() - fd).abs());
                worst = worst.max((cdf(u1, u2, c).unwrap() - clayton_cdf(u1, u2, theta)).abs());
            }
        }
    }
    out.check(worst <= 1e-5, format!("h-function vs central differences of C on a 19x19 grid: max error {worst:.2e} (tol 1e-5)"));

    let n = 50_000;
    for theta in [0.5, 2.0, 8.0] {
        let c = CopulaParam::clayton(theta).unwrap();
        let pairs = sample(c, n, &mut substream(SEED, "acceptance-2", &[theta.to_bits()])).unwrap();
        let u1: Vec<f64> = pairs.iter().map(|p| p.u1).collect();
        let u2: Vec<f64> = pairs.iter().map(|p| p.u2).collect();
        let tau_hat = kendall_tau(&u1, &u2);
        let truth = theta / (theta + 2.0);
        // Hoeffding projection of the Kendall kernel: 4C(u,v) - 2u - 2v + 1.
        let h1: Vec<f64> = pairs
            .iter()
            .map(|p| 4.0 * clayton_cdf(p.u1, p.u2, theta) - 2.0 * p.u1 - 2.0 * p.u2 + 1.0)
            .collect();
        let mean = h1.iter().sum::<f64>() / n as f64;
        let var = h1.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (4.0 * var / n as f64).sqrt();
        let z = (tau_hat - truth) / se;
        out.check(
            z.abs() <= 3.0,
            format!("θ={theta}: Kendall τ̂ = {tau_hat:.5} vs {truth:.5}, SE {se:.2e}, |z| = {:.2} (tol 3)", z.abs()),
        );
    }
    out
}

// ---------------------------------------------------------------- criterion 3

fn ks_uniform_oracle(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
        .fold(0.0, f64::max)
}

fn criterion_3() -> Outcome {
    let mut out = Outcome::new();
    let reps = 1000;
    let n2 = 350;
    let c = CopulaParam::clayton(2.0).unwrap();
    for k in [2usize, 3] {
        let mut rej = [0usize; 2];
        let mut pvals = Vec::with_capacity(reps);
        for r in 0..reps {
            let keys = [k as u64, r as u64];
            let pairs = sample(c, n2, &mut substream(SEED, "acceptance-3-pairs", &keys)).unwrap();
            let mut er = substream(SEED, "acceptance-3-eta", &keys);
            let eta: Vec<f64> = (0..n2).map(|_| er.random::<f64>()).collect();
            let m1 = permutation_test(&pairs, &eta, k, 500, 0.05, &mut substream(SEED, "acceptance-3-perm", &keys))
                .unwrap();
            let m2 = chisq_test(&pairs, &eta, k, 0.05).unwrap();
            rej[0] += m1.reject as usize;
            rej[1] += m2.reject as usize;
            pvals.push(m1.p_value);
        }
        for (name, count) in ["Method 1", "Method 2"].iter().zip(rej) {
            let rate = count as f64 / reps as f64;
            out.check(
                (0.03..=0.07).contains(&rate),
                format!("{name}, K={k}: type-I error {rate:.3} over {reps} replicates (target [0.03, 0.07])"),
            );
        }
        let ks = ks_uniform_oracle(pvals);
        out.check(ks < 0.05, format!("Method 1, K={k}: KS distance of p-values to U(0,1) = {ks:.4} (tol 0.05)"));
    }
    out
}

// ------------------------------------------------------------ criteria 4 to 6

fn rate(rows: &[BenchResult], sc: ScenarioId, n: usize, m: BenchMethod, k: Option<usize>) -> f64 {
    rows.iter()
        .find(|r| r.scenario == sc && r.n == n && r.method == m && r.k == k)
        .unwrap_or_else(|| panic!("missing cell {sc} {n} {m} {k:?}"))
        .reject_rate
}

fn bench(scenarios: Vec<ScenarioId>, sizes: Vec<usize>, methods: Vec<BenchMethod>) -> Vec<BenchResult> {
    let spec = BenchSpec {
        scenarios,
        sizes,
        methods,
        ks: vec![2, 3],
        replicates: 100,
        seed: SEED,
        bootstrap_draws: 50,
        ..BenchSpec::default()
    };
    run_bench(&spec, None).expect("bench run")
}

const TESTS: [BenchMethod; 2] = [BenchMethod::Permutation, BenchMethod::Chisq];

fn criterion_4(rows: &[BenchResult]) -> Outcome {
    let mut out = Outcome::new();
    for m in TESTS {
        for k in [2, 3] {
            let r = rate(rows, ScenarioId::Sc1, 500, m, Some(k));
            out.check((0.02..=0.12).contains(&r), format!("Sc1 N=500 {m} K={k}: rejection rate {r:.2} (target [0.02, 0.12])"));
        }
    }
    out
}

fn criterion_5(rows: &[BenchResult]) -> Outcome {
    let mut out = Outcome::new();
    for m in TESTS {
        for k in [2, 3] {
            let sc2 = rate(rows, ScenarioId::Sc2, 500, m, Some(k));
            out.check(sc2 >= 0.80, format!("Sc2 N=500 {m} K={k}: rejection rate {sc2:.2} (target ≥ 0.80)"));
            let sc1 = rate(rows, ScenarioId::Sc1, 500, m, Some(k));
            let s500 = rate(rows, ScenarioId::Sc3, 500, m, Some(k));
            let s1000 = rate(rows, ScenarioId::Sc3, 1000, m, Some(k));
            out.check(s500 > sc1, format!("Sc3 N=500 {m} K={k}: {s500:.2} > Sc1 {sc1:.2}"));
            out.check(s1000 > s500, format!("Sc3 {m} K={k}: N=1000 {s1000:.2} > N=500 {s500:.2}"));
        }
    }
    out
}

fn criterion_6(tests: &[BenchResult], criteria: &[BenchResult]) -> Outcome {
    let mut out = Outcome::new();
    let worst_test = TESTS
        .iter()
        .flat_map(|&m| [2, 3].map(|k| rate(tests, ScenarioId::Sc1, 500, m, Some(k))))
        .fold(0.0, f64::max);
    for m in [BenchMethod::Cvml, BenchMethod::Ccvml, BenchMethod::Waic] {
        let r = rate(criteria, ScenarioId::Sc1, 500, m, None);
        out.check(
            r > 0.20 && r > worst_test,
            format!("Sc1 N=500 {m} (B=50): selects full model in {r:.2} (target > 0.20 and > Methods 1-2 max {worst_test:.2})"),
        );
    }
    out
}

// ---------------------------------------------------------------- criterion 7

fn run_cli_bench(threads: usize, dir: &std::path::Path) -> (Vec<u8>, Vec<u8>) {
    let csv = dir.join(format!("bench-{threads}.csv"));
    let json = dir.join(format!("bench-{threads}.json"));
    let status = Command::new(env!("CARGO_BIN_EXE_sacheck"))
        .args(["bench", "--scenarios", "sc1,sc2", "--sizes", "200", "--methods", "permutation,chisq,waic"])
        .args(["--k", "2,3", "--replicates", "10", "--j", "99", "--bootstrap-draws", "5", "--seed", "17"])
        .args(["--threads", &threads.to_string()])
        .arg("--out")
        .arg(&csv)
        .arg("--json")
        .arg(&json)
        .status()
        .expect("spawn sacheck");
    assert!(status.success(), "bench exited with {status}");
    (std::fs::read(csv).unwrap(), std::fs::read(json).unwrap())
}

fn criterion_7() -> Outcome {
    let mut out = Outcome::new();
    let dir = tempfile::tempdir().unwrap();
    let one = run_cli_bench(1, dir.path());
    let four = run_cli_bench(4, dir.path());
    out.check(one.0 == four.0, format!("CSV output identical at 1 and 4 threads ({} bytes)", one.0.len()));
    out.check(one.1 == four.1, format!("JSON output identical at 1 and 4 threads ({} bytes)", one.1.len()));
    out
}

// ----------------------------------------------------------------------------

fn report(id: usize, title: &str, started: Instant, o: &Outcome) -> bool {
    println!(
        "{} criterion {id}: {title} ({:.1}s)",
        if o.pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    for d in &o.details {
        println!("    {d}");
    }
    o.pass
}

fn main() {
    // `cargo test -- --list` and filters should not trigger a long run.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
        .unwrap_or_default();
    let wanted = |i: usize| only.is_empty() || only.contains(&i);
    let mut all = true;

    if wanted(1) {
        let t = Instant::now();
        all &= report(1, "exact-formula oracles", t, &criterion_1());
    }
    if wanted(2) {
        let t = Instant::now();
        all &= report(2, "copula math", t, &criterion_2());
    }
    if wanted(3) {
        let t = Instant::now();
        all &= report(3, "oracle-null level", t, &criterion_3());
    }
    if wanted(4) || wanted(5) || wanted(6) {
        let t = Instant::now();
        let mut tests = bench(vec![ScenarioId::Sc1, ScenarioId::Sc2, ScenarioId::Sc3], vec![500], TESTS.to_vec());
        if wanted(5) {
            tests.extend(bench(vec![ScenarioId::Sc3], vec![1000], TESTS.to_vec()));
        }
        if wanted(4) {
            all &= report(4, "pipeline level under Sc1", t, &criterion_4(&tests));
        }
        if wanted(5) {
            all &= report(5, "pipeline power under Sc2 and Sc3", t, &criterion_5(&tests));
        }
        if wanted(6) {
            let t = Instant::now();
            let crit = bench(
                vec![ScenarioId::Sc1],
                vec![500],
                vec![BenchMethod::Cvml, BenchMethod::Ccvml, BenchMethod::Waic],
            );
            all &= report(6, "generic-criteria over-rejection", t, &criterion_6(&tests, &crit));
        }
    }
    if wanted(7) {
        let t = Instant::now();
        all &= report(7, "determinism across thread counts", t, &criterion_7());
    }

    if !all {
        println!("acceptance: at least one criterion FAILED");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
