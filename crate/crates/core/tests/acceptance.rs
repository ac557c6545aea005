//! Acceptance suite. Every test prints one `criterion N: PASS|FAIL` line
//! and then asserts on it, so `cargo test --test acceptance -- --nocapture`
//! gives the full report.
//!
//! Reference numbers come from the published experiment tables, which show
//! four decimals (or a four-digit mantissa below 1e-3). Comparisons against
//! them allow half a unit in the last displayed digit on top of the relative
//! tolerance.

use std::time::{Duration, Instant};

use l1dual::experiments::{build_instance, run_table, ExperimentConfig, Table};
use l1dual::fppa::{finite_objective, finite_problem_lp, fppa_solve, prox_residual_l1, prox_scaled_l1, FppaParams};
use l1dual::norms::{DirectSumNorm, NormKind};
use l1dual::operators::{RowFamily, TrigRows, TruncatedMatrix};
use l1dual::pipeline::{solve_regularized, Branch, N0Strategy, RegularizationProblem};
use l1dual::polytope::{find_n0_by_objective, find_n0_by_vertices, vertex_sweep, EnumerationLimits, SlabSystem};
use l1dual::{DenseVec, SparseSeq};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Noise seed shipped in `manifests/table2.toml`.
const M12_SEED: u64 = 1302;
/// Noise seed shipped in `manifests/table3.toml`.
const M200_SEED: u64 = 9;

const TABLE1: [(usize, usize); 5] = [(14, 10_256), (16, 21_070), (18, 44_134), (19, 59_930), (20, 59_930)];

const TABLE2_RHO: [f64; 15] = [12.0, 10.0, 8.0, 7.0, 5.0, 1.0, 0.8, 0.5, 0.3, 0.25, 0.2, 0.18, 0.1, 0.01, 0.001];
const TABLE2_S: [f64; 15] = [
    0.7637, 0.7637, 0.7637, 0.7180, 0.5498, 0.1407, 0.1145, 0.0736, 0.0455, 0.0384, 0.0310, 0.0279, 0.0155, 0.0016,
    1.5550e-4,
];
const TABLE2_SL: [usize; 15] = [0, 0, 0, 1, 1, 3, 4, 5, 6, 7, 9, 10, 12, 12, 12];

const TABLE3_RHO: [f64; 14] =
    [132.0, 130.0, 128.0, 127.0, 100.0, 80.0, 50.0, 10.0, 1.0, 0.1, 0.05, 0.03, 0.01, 0.001];
const TABLE3_S: [f64; 14] = [
    12.8027, 12.8027, 12.8027, 12.8026, 10.7137, 8.9762, 6.2516, 1.4854, 0.1891, 0.0413, 0.0272, 0.0177, 0.0060,
    5.9779e-4,
];
const TABLE3_SL: [usize; 14] = [0, 0, 0, 1, 1, 1, 2, 5, 12, 36, 67, 132, 200, 200];

const TABLE4_RHO: [f64; 16] = [
    385.0, 382.0, 381.0, 380.0, 300.0, 250.0, 150.0, 50.0, 10.0, 1.0, 0.1, 0.05, 0.02, 0.01, 0.001, 0.0001,
];
const TABLE4_S: [f64; 16] = [
    38.3914, 38.3914, 38.3914, 38.3864, 32.1429, 27.8101, 18.7604, 7.1210, 1.6264, 0.2608, 0.1071, 0.0837, 0.0413,
    0.0208, 0.0021, 2.0760e-4,
];
const TABLE4_SL: [usize; 16] = [0, 0, 0, 1, 1, 1, 2, 3, 7, 17, 69, 150, 515, 600, 600, 600];

const DUALITY_TOL: f64 = 5e-3;
const S_REL_TOL: f64 = 1e-2;
const ZERO_BRANCH_TOL: f64 = 1e-12;
const ASTAR_AGREE_TOL: f64 = 1e-6;
const FPPA_LP_TOL: f64 = 1e-6;
const PROX_TOL: f64 = 1e-12;
const NORMING_TOL: f64 = 1e-10;
const LARGE_GAP_SL_TOL: f64 = 0.10;

fn report(criterion: &str, ok: bool, detail: impl AsRef<str>) -> bool {
    println!("criterion {criterion}: {} ({})", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
    ok
}

/// Half a unit in the last digit the tables display for `s`.
fn display_half_unit(s: f64) -> f64 {
    if s >= 1e-3 {
        5e-5
    } else {
        5e-5 * 10f64.powf(s.log10().floor())
    }
}

/// Deviation from a published value in units of the allowed tolerance; <= 1 passes.
fn s_deviation(s: f64, published: f64) -> f64 {
    (s - published).abs() / (S_REL_TOL * published + display_half_unit(published))
}

fn m12_table(seed: u64) -> (Table, Duration) {
    let cfg = ExperimentConfig::new(12, TABLE2_RHO.to_vec(), seed);
    let t = Instant::now();
    let table = run_table(&cfg, 1).expect("m = 12 table");
    (table, t.elapsed())
}

fn row_errors(table: &Table) -> Vec<String> {
    table.rows.iter().filter_map(|r| r.error.clone().map(|e| format!("rho {}: {e}", r.rho))).collect()
}

#[test]
fn criterion_1_vertex_counts() {
    let rows = RowFamily::new(TrigRows::new(12).unwrap());
    let limits = EnumerationLimits::default();
    let t = Instant::now();
    let slabs = SlabSystem::from_rows(&rows, 20, 1.0, false).unwrap();
    let ns: Vec<usize> = TABLE1.iter().map(|&(n, _)| n).collect();
    let counts = vertex_sweep(&slabs, &ns, &limits).unwrap();
    let stab = find_n0_by_vertices(&rows, 1.0, 12, 40, false, &limits).unwrap();
    let elapsed = t.elapsed();
    let mut ok = stab.n0 == 19 && stab.final_count == 59_930 && elapsed <= Duration::from_secs(600);
    let mut detail = Vec::new();
    for (&(n, want), (n_got, got)) in TABLE1.iter().zip(&counts) {
        assert_eq!(n, *n_got);
        ok &= *got == Some(want);
        detail.push(format!("n={n}:{}", got.map_or("unbounded".into(), |c| c.to_string())));
    }
    let detail = format!("{}, n0={}, {:.1?}", detail.join(" "), stab.n0, elapsed);
    assert!(report("1", ok, detail));
}

#[test]
fn criterion_2_strong_duality_m12() {
    let (table, elapsed) = m12_table(M12_SEED);
    let errors = row_errors(&table);
    let mut worst_gap: f64 = 0.0;
    let mut worst_s: f64 = 0.0;
    let mut misses = Vec::new();
    for (row, &published) in table.rows.iter().zip(&TABLE2_S) {
        worst_gap = worst_gap.max((row.f_r - row.s).abs() / row.s.max(1e-6));
        let dev = s_deviation(row.s, published);
        worst_s = worst_s.max(dev);
        if dev > 1.0 {
            misses.push(format!("rho {}: S {:.6} vs {published}", row.rho, row.s));
        }
    }
    let ok = errors.is_empty() && worst_gap <= DUALITY_TOL && worst_s <= 1.0 && elapsed <= Duration::from_secs(60);
    let detail = format!(
        "seed {M12_SEED}, max gap {worst_gap:.2e}, worst S deviation {worst_s:.3} of tolerance, {elapsed:.1?}{}{}",
        if misses.is_empty() { String::new() } else { format!(", misses: {}", misses.join("; ")) },
        if errors.is_empty() { String::new() } else { format!(", errors: {}", errors.join("; ")) },
    );
    assert!(report("2", ok, detail));
}

fn sl_consistent(table: &Table) -> Result<(), String> {
    // rows are listed with decreasing rho, so SL must not decrease down the table
    for w in table.rows.windows(2) {
        if w[1].rho < w[0].rho && w[1].sl < w[0].sl {
            return Err(format!("SL drops from {} to {} at rho {}", w[0].sl, w[1].sl, w[1].rho));
        }
    }
    for r in &table.rows {
        let zero = r.rho_lambda_inf > r.astar_lambda_inf;
        if (r.sl == 0) != zero || (r.branch == Some(Branch::ZeroSolution)) != zero {
            return Err(format!("rho {}: SL {} with branch {:?}", r.rho, r.sl, r.branch));
        }
    }
    Ok(())
}

#[test]
fn criterion_3_sparsity_trajectory() {
    let (table, _) = m12_table(M12_SEED);
    let sl: Vec<usize> = table.rows.iter().map(|r| r.sl).collect();
    let mut ok = sl == TABLE2_SL;
    let mut detail = format!("seed {M12_SEED} SL {sl:?}");
    for seed in [M12_SEED, 0, 1, 2, 3] {
        let table = if seed == M12_SEED { table.clone() } else { m12_table(seed).0 };
        if let Err(e) = sl_consistent(&table) {
            ok = false;
            detail += &format!("; seed {seed}: {e}");
        }
    }
    assert!(report("3", ok, detail));
}

#[test]
fn criterion_4_zero_branch_identity() {
    let cfg = ExperimentConfig::new(12, vec![8.0, 10.0, 12.0], M12_SEED);
    let inst = build_instance(&cfg).unwrap();
    let y0_l1 = inst.y0.l1_norm();
    let mut ok = true;
    let mut astar = Vec::new();
    for &rho in &cfg.rho_list {
        let problem = RegularizationProblem::new(inst.rows.clone(), inst.y0.clone(), rho).unwrap();
        let sol = solve_regularized(&problem, N0Strategy::Objective).unwrap();
        ok &= sol.branch == Branch::ZeroSolution && sol.x.is_empty();
        ok &= (sol.f_r - y0_l1).abs() <= ZERO_BRANCH_TOL * y0_l1;
        ok &= (sol.dual.s - y0_l1).abs() <= ZERO_BRANCH_TOL * y0_l1;
        astar.push(sol.dual.mu_supnorm);
    }
    let spread = astar.iter().cloned().fold(f64::MIN, f64::max) - astar.iter().cloned().fold(f64::MAX, f64::min);
    ok &= spread <= ASTAR_AGREE_TOL;
    assert!(report("4", ok, format!("|y0|_1 = {y0_l1:.6}, |A_* lambda|_inf = {:.6} (spread {spread:.1e})", astar[0])));
}

#[test]
fn criterion_5_fppa_matches_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut unconverged = 0;
    for _ in 0..50 {
        let m = rng.gen_range(2..=10);
        let n = rng.gen_range(1..=40);
        let data: Vec<f64> = (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = TruncatedMatrix::from_row_major(m, n, data).unwrap();
        let y0: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rho = 10f64.powf(rng.gen_range(-2.0..1.0));
        let params = FppaParams::default_for(&h);
        let (z, trace) = fppa_solve(&h, &y0, rho, &params, &vec![0.0; n], &vec![0.0; m]).unwrap();
        let (_, lp_value) = finite_problem_lp(&h, &y0, rho).unwrap();
        let f = finite_objective(&h, &y0, rho, &z);
        worst = worst.max((f - lp_value).abs() / lp_value.abs().max(1e-12));
        unconverged += usize::from(!trace.converged);
    }
    let elapsed = t.elapsed();
    let ok = worst <= FPPA_LP_TOL && unconverged == 0 && elapsed <= Duration::from_secs(120);
    assert!(report("5", ok, format!("worst relative gap {worst:.2e}, {unconverged} unconverged, {elapsed:.1?}")));
}

#[test]
fn criterion_6_prox_operators() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let w: f64 = rng.gen_range(-5.0..5.0);
        let y: f64 = rng.gen_range(-5.0..5.0);
        let t: f64 = rng.gen_range(0.0..3.0);
        // w - u must be a subgradient of t|.| at u
        let u = prox_scaled_l1(&[w], t)[0];
        worst = worst.max(if u != 0.0 { (w - u - t * u.signum()).abs() } else { ((w - u).abs() - t).max(0.0) });
        // w - u must be a subgradient of t|y - .| at u
        let u = prox_residual_l1(&[w], &[y], t).unwrap()[0];
        worst = worst.max(if u != y { (w - u - t * (u - y).signum()).abs() } else { ((w - u).abs() - t).max(0.0) });
    }
    let mut firm_violation: f64 = 0.0;
    for _ in 0..1_000 {
        let dim = 8;
        let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let t = rng.gen_range(0.0..3.0);
        let pairs = [
            (prox_scaled_l1(&a, t), prox_scaled_l1(&b, t)),
            (prox_residual_l1(&a, &y, t).unwrap(), prox_residual_l1(&b, &y, t).unwrap()),
        ];
        for (pa, pb) in pairs {
            let d = pa.sub(&pb);
            let lhs = d.dot(&d);
            let rhs = d.dot(&DenseVec(a.clone()).sub(&b));
            firm_violation = firm_violation.max(lhs - rhs);
        }
    }
    let ok = worst <= PROX_TOL && firm_violation <= PROX_TOL;
    assert!(report("6", ok, format!("worst subgradient residual {worst:.1e}, worst firm-nonexpansive excess {firm_violation:.1e}")));
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-3.0..3.0)).collect()
}

#[test]
fn criterion_7_norming_functionals() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let kinds = [(NormKind::L1, NormKind::L1), (NormKind::L2, NormKind::L1), (NormKind::LInf, NormKind::L2)];
    let mut worst: f64 = 0.0;
    let mut structural = Vec::new();
    for p in [1.5, 2.0, 3.0, f64::INFINITY] {
        for i in 0..1_000 {
            let (left, right) = kinds[i % kinds.len()];
            let norm = DirectSumNorm::new(p, left, right).unwrap();
            let a = random_vec(&mut rng, 1 + i % 5);
            // every tenth vector lies in the first summand alone
            let b = if i % 10 == 0 { vec![0.0; 3] } else { random_vec(&mut rng, 3) };
            let (lam, mu) = norm.norming_functional(&a, &b).unwrap();
            let total = norm.norm(&a, &b);
            worst = worst.max((lam.dot(&a) + mu.dot(&b) - total).abs() / total);
            worst = worst.max((norm.dual().norm(&lam, &mu) - 1.0).abs());
            let (na, nb) = (DenseVec(a.clone()).norm(left), DenseVec(b.clone()).norm(right));
            let (nl, nm) = (lam.norm(left.dual()), mu.norm(right.dual()));
            if nb == 0.0 {
                if !mu.is_zero() || (lam.dot(&a) - na).abs() > NORMING_TOL * na {
                    structural.push(format!("p={p}: b = 0 not normed by the first component alone"));
                }
            } else if p.is_finite() {
                // component scaling constants
                let q = p / (p - 1.0);
                let ca = (1.0 + (nb / na).powf(p)).powf(-1.0 / q);
                let cb = (1.0 + (na / nb).powf(p)).powf(-1.0 / q);
                worst = worst.max((nl - ca).abs()).max((nm - cb).abs());
            } else {
                let want = if na > nb { (1.0, 0.0) } else { (0.0, 1.0) };
                worst = worst.max((nl - want.0).abs()).max((nm - want.1).abs());
            }
        }
    }

    // support of a norming l1 vector sits inside the peak set of c
    let mut support_ok = true;
    for trial in 0..200 {
        let len = 50;
        let peak_value = rng.gen_range(0.5..2.0);
        // sequence indices start at 1; c[0] is unused
        let mut c: Vec<f64> = (0..=len).map(|_| rng.gen_range(-0.9..0.9) * peak_value).collect();
        let peaks: Vec<usize> = (0..1 + trial % 4).map(|_| rng.gen_range(1..=len)).collect();
        for &k in &peaks {
            c[k] = if rng.gen_bool(0.5) { peak_value } else { -peak_value };
        }
        let entries: Vec<(usize, f64)> = peaks.iter().map(|&k| (k, c[k].signum() * rng.gen_range(0.1..1.0))).collect();
        let mut x = SparseSeq::from_entries(dedup(entries)).unwrap();
        let pairing = |x: &SparseSeq| x.pair_with(|k| c[k]);
        support_ok &= (pairing(&x) - x.l1_norm() * peak_value).abs() <= NORMING_TOL;
        // moving mass off the peak set breaks the norming identity
        let off = (1..=len).find(|k| !peaks.contains(k)).unwrap();
        let mut moved = x.entries().to_vec();
        moved.push((off, 0.3));
        x = SparseSeq::from_entries(dedup(moved)).unwrap();
        support_ok &= pairing(&x) < x.l1_norm() * peak_value - NORMING_TOL;
    }
    // and the pipeline's primal solutions respect it
    let (table, _) = m12_table(M12_SEED);
    let cfg = ExperimentConfig::new(12, vec![1.0], M12_SEED);
    let inst = build_instance(&cfg).unwrap();
    for row in table.rows.iter().filter(|r| r.branch == Some(Branch::FiniteSolve)) {
        let problem = RegularizationProblem::new(inst.rows.clone(), inst.y0.clone(), row.rho).unwrap();
        let sol = solve_regularized(&problem, N0Strategy::Objective).unwrap();
        support_ok &= sol.x.support().iter().all(|k| sol.dual.peak.contains(k));
    }

    let ok = worst <= NORMING_TOL && structural.is_empty() && support_ok;
    let detail = format!(
        "worst identity residual {worst:.1e}, support containment {}{}",
        if support_ok { "holds" } else { "violated" },
        if structural.is_empty() { String::new() } else { format!(", {}", structural[0]) }
    );
    assert!(report("7", ok, detail));
}

fn dedup(mut entries: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    entries.sort_by_key(|e| e.0);
    entries.dedup_by_key(|e| e.0);
    entries
}

/// Shared check for the large-m tables. Returns the verdict and a summary.
fn large_m_check(
    m: usize,
    seed: u64,
    rhos: &[f64],
    published_s: &[f64],
    published_sl: &[usize],
    large_gap: &[f64],
    published_n0: usize,
) -> (bool, String) {
    let cfg = ExperimentConfig::new(m, rhos.to_vec(), seed);
    let inst = build_instance(&cfg).unwrap();
    // the smallest rho in the list needs the most slabs
    let rho_min = rhos.iter().cloned().fold(f64::INFINITY, f64::min);
    let stab = find_n0_by_objective(&inst.rows, &inst.y0, rho_min, m, 5 * m, 1e-9, true).unwrap();
    let monotone = stab.sweep.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12));
    let table = run_table(&cfg, 1).unwrap();
    let errors = row_errors(&table);

    let mut s_misses = Vec::new();
    let mut gap_misses = Vec::new();
    for ((row, &s_pub), &sl_pub) in table.rows.iter().zip(published_s).zip(published_sl) {
        if large_gap.contains(&row.rho) {
            let sl_ok = (row.sl as f64 - sl_pub as f64).abs() <= LARGE_GAP_SL_TOL * sl_pub as f64;
            if row.f_r < row.s * (1.0 - 1e-9) || !sl_ok {
                gap_misses.push(format!("rho {}: SL {} vs {sl_pub}, f_r {:.4e} S {:.4e}", row.rho, row.sl, row.f_r, row.s));
            }
        } else if s_deviation(row.s, s_pub) > 1.0 {
            s_misses.push(format!("rho {}: S {:.5e} vs {s_pub}", row.rho, row.s));
        }
    }
    let n0_ok = stab.n0 == published_n0;
    let ok = n0_ok && monotone && errors.is_empty() && s_misses.is_empty() && gap_misses.is_empty();
    let mut detail = format!(
        "m={m} seed {seed}: n0 {} (want {published_n0}), S(l) nonincreasing {monotone}, S column misses {}, large-gap misses {}",
        stab.n0,
        s_misses.len(),
        gap_misses.len()
    );
    for miss in s_misses.iter().chain(&gap_misses).chain(&errors) {
        detail += &format!("; {miss}");
    }
    (ok, detail)
}

#[test]
fn criterion_8_large_m_stabilization() {
    let (ok, detail) = large_m_check(200, M200_SEED, &TABLE3_RHO, &TABLE3_S, &TABLE3_SL, &[0.1, 0.05, 0.03], 333);
    let mut ok = report("8 (m=200)", ok, detail);
    if std::env::var_os("L1DUAL_FULL").is_some() {
        let (ok600, detail) =
            large_m_check(600, M200_SEED, &TABLE4_RHO, &TABLE4_S, &TABLE4_SL, &[0.1, 0.05, 0.02], 710);
        ok &= report("8 (m=600)", ok600, detail);
    } else {
        println!("criterion 8 (m=600): SKIPPED (set L1DUAL_FULL=1 to run)");
    }
    assert!(ok);
}

#[test]
fn criterion_9_determinism() {
    let (a, _) = m12_table(M12_SEED);
    let (b, _) = m12_table(M12_SEED);
    let (ja, jb) = (a.to_json().unwrap(), b.to_json().unwrap());
    assert!(report("9", ja == jb && a.to_csv() == b.to_csv(), format!("{} byte sidecar", ja.len())));
}
