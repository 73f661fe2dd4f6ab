//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::process::{Command, ExitCode};
use std::time::Instant;

use bearingform::control_global::{control_velocity, jacobian};
use bearingform::control_local::{check_sync_assumption, Rotation, SyncAssumption};
use bearingform::distance::{
    bearing_matrix_via_distance, distance_rigidity_matrix, distance_rigidity_report, perp_motion,
    perp_motion_inverse,
};
use bearingform::fixtures;
use bearingform::geometry;
use bearingform::linalg::{rank_nullspace, RANK_TOL};
use bearingform::sim::{
    collision_events, integrate, random_positions, random_rotations, run_batch, unstack3,
    InitialState, Mode, SimConfig,
};
use bearingform::target::compute_target;
use bearingform::{BearingConstraints, Framework};
use common::{bearing_jacobian, distance_jacobian, elimination_rank, random_framework, rng};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !($cond) {
            return Err(format!($($msg)+));
        }
    };
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        (
            "rank fixtures: cube + diagonal, hexagonal pyramid",
            rank_fixtures,
        ),
        (
            "planar sweep: rank R = rank R_D and IBR <=> IDR",
            planar_sweep,
        ),
        ("lifting sweep: rank grows by (d'-d)(n-1)", lifting_sweep),
        ("centroid and scale invariance", invariance),
        ("global convergence on the square", global_convergence),
        ("equilibria and Jacobian", equilibria),
        ("collision avoidance inside the bound", collision_avoidance),
        ("local-frame convergence", local_convergence),
        (
            "perpendicular motions swap null spaces",
            perpendicular_motions,
        ),
        ("bearing matrix from the distance matrix", distance_identity),
        ("simulate is deterministic", determinism),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!(
                "PASS criterion {:>2}: {name} ({detail}) [{secs:.2}s]",
                k + 1
            ),
            Err(detail) => {
                failed += 1;
                println!(
                    "FAIL criterion {:>2}: {name} ({detail}) [{secs:.2}s]",
                    k + 1
                );
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn points_of(f: &Framework) -> Vec<Vec<f64>> {
    f.positions()
        .as_slice()
        .chunks(f.dim())
        .map(<[f64]>::to_vec)
        .collect()
}

fn rank_fixtures() -> Outcome {
    let mut notes = Vec::new();
    for (name, f, rd_expected) in [
        ("cube", fixtures::cube(), 13),
        ("pyramid", fixtures::hexagonal_pyramid(), 12),
    ] {
        let n = f.agent_count();
        let rep = f.rigidity_report(RANK_TOL).map_err(|e| e.to_string())?;
        let drep = distance_rigidity_report(&f, RANK_TOL).map_err(|e| e.to_string())?;
        ensure!(
            drep.rank == rd_expected,
            "{name}: rank R_D = {}, expected {rd_expected}",
            drep.rank
        );
        ensure!(
            rep.rank == 3 * n - 4,
            "{name}: rank R = {}, expected {}",
            rep.rank,
            3 * n - 4
        );
        ensure!(
            rep.infinitesimally_bearing_rigid,
            "{name}: not reported IBR"
        );

        let edges = f.graph().edge_labels();
        let pts = points_of(&f);
        let r_oracle = bearing_jacobian(&pts, &edges);
        let rd_oracle = distance_jacobian(&pts, &edges);
        ensure!(
            (&r_oracle - f.rigidity_matrix()).amax() < 1e-12,
            "{name}: R differs from its definition"
        );
        ensure!(
            (&rd_oracle - distance_rigidity_matrix(&f)).amax() < 1e-12,
            "{name}: R_D differs from its definition"
        );
        let (r_el, rd_el) = (
            elimination_rank(&r_oracle, 1e-9),
            elimination_rank(&rd_oracle, 1e-9),
        );
        ensure!(
            r_el == rep.rank && rd_el == drep.rank,
            "{name}: elimination ranks {r_el}, {rd_el}"
        );
        notes.push(format!(
            "{name}: rank R {} rank R_D {}",
            rep.rank, drep.rank
        ));
    }
    Ok(notes.join("; "))
}

fn planar_sweep() -> Outcome {
    let mut rng = rng(2);
    let (mut rigid, mut flexible) = (0, 0);
    for case in 0..100 {
        let n = rng.gen_range(3..=8);
        let rf = random_framework(&mut rng, n, 2);
        let f = &rf.framework;
        let rep = f.rigidity_report(RANK_TOL).map_err(|e| e.to_string())?;
        let drep = distance_rigidity_report(f, RANK_TOL).map_err(|e| e.to_string())?;
        ensure!(
            rep.rank == drep.rank,
            "case {case}: rank R {} vs rank R_D {}",
            rep.rank,
            drep.rank
        );
        ensure!(
            rep.infinitesimally_bearing_rigid == drep.infinitesimally_distance_rigid,
            "case {case}: IBR {} vs IDR {}",
            rep.infinitesimally_bearing_rigid,
            drep.infinitesimally_distance_rigid
        );
        let oracle = elimination_rank(&bearing_jacobian(&rf.points, &rf.edges), 1e-9);
        ensure!(
            oracle == rep.rank,
            "case {case}: elimination rank {oracle} vs {}",
            rep.rank
        );
        if rep.infinitesimally_bearing_rigid {
            rigid += 1;
        } else {
            flexible += 1;
        }
    }
    Ok(format!(
        "100 frameworks, {rigid} rigid, {flexible} flexible, 0 mismatches"
    ))
}

fn lifting_sweep() -> Outcome {
    let mut rng = rng(3);
    let mut count = 0;
    for (d, d_new) in [(2, 3), (3, 4)] {
        for case in 0..50 {
            let n = rng.gen_range(3..=8);
            let rf = random_framework(&mut rng, n, d);
            let f = &rf.framework;
            let lifted = f.lift(d_new).map_err(|e| e.to_string())?;
            let rep = f.rigidity_report(RANK_TOL).map_err(|e| e.to_string())?;
            let lrep = lifted
                .rigidity_report(RANK_TOL)
                .map_err(|e| e.to_string())?;
            let expected = rep.rank + (d_new - d) * (n - 1);
            ensure!(
                lrep.rank == expected,
                "R^{d}->R^{d_new} case {case}: rank {} expected {expected}",
                lrep.rank
            );
            ensure!(
                lrep.infinitesimally_bearing_rigid == rep.infinitesimally_bearing_rigid,
                "R^{d}->R^{d_new} case {case}: IBR flag changed"
            );
            let oracle = elimination_rank(&bearing_jacobian(&points_of(&lifted), &rf.edges), 1e-9);
            ensure!(
                oracle == expected,
                "R^{d}->R^{d_new} case {case}: elimination rank {oracle}"
            );
            count += 1;
        }
    }
    Ok(format!("{count} lifts"))
}

fn drift_run(
    name: &str,
    init: InitialState,
    c: &BearingConstraints,
    f: &Framework,
    mode: Mode,
) -> Result<f64, String> {
    let cfg = SimConfig {
        t_end: 20.0,
        mode,
        record_every: 10,
        ..SimConfig::default()
    };
    let trace = integrate(&init, c, f.graph(), &cfg).map_err(|e| format!("{name}: {e}"))?;
    ensure!(
        trace.event.is_none(),
        "{name}: run stopped early: {:?}",
        trace.event
    );
    ensure!(
        (trace.times.last().unwrap() - 20.0).abs() < 1e-9,
        "{name}: horizon not reached"
    );
    let worst = trace
        .metrics
        .iter()
        .map(|m| m.centroid_drift.max(m.scale_drift))
        .fold(0.0, f64::max);
    ensure!(worst <= 1e-6, "{name}: drift {worst:e}");
    Ok(worst)
}

fn invariance() -> Outcome {
    let mut rng = rng(4);
    let mut worst: f64 = 0.0;
    for (name, f) in [("octagon", fixtures::octagon()), ("cube", fixtures::cube())] {
        let c = BearingConstraints::from_framework(&f);
        let p0 = random_positions(&mut rng, f.agent_count(), f.dim(), 1.0);
        worst = worst.max(drift_run(
            name,
            InitialState::Global(p0),
            &c,
            &f,
            Mode::Global,
        )?);
    }
    for (name, f) in [
        ("square local", fixtures::square_3d()),
        ("cube local", fixtures::cube()),
    ] {
        let c = BearingConstraints::from_framework(&f);
        let n = f.agent_count();
        let init = InitialState::Local {
            positions: unstack3(&random_positions(&mut rng, n, 3, 1.0)),
            rotations: random_rotations(&mut rng, n, std::f64::consts::FRAC_PI_3),
        };
        worst = worst.max(drift_run(name, init, &c, &f, Mode::Local)?);
    }
    Ok(format!("max drift {worst:.1e} over t in [0, 20]"))
}

fn global_convergence() -> Outcome {
    let f = fixtures::square();
    let c = BearingConstraints::from_framework(&f);
    let mut rng = rng(5);
    let mut initials = Vec::new();
    let mut excluded = 0;
    while initials.len() < 50 {
        let p0 = random_positions(&mut rng, 4, 2, 1.0);
        let Ok(t) = compute_target(&c, f.graph(), &p0, RANK_TOL) else {
            excluded += 1;
            continue;
        };
        let r_star = geometry::centered(&t.p_star, 2).norm();
        let reflected = geometry::point_reflection(&t.p_star, 2);
        if (&p0 - reflected).norm() <= 1e-3 * r_star {
            excluded += 1;
            continue;
        }
        initials.push(InitialState::Global(p0));
    }
    let cfg = SimConfig {
        t_end: 40.0,
        record_every: 100,
        ..SimConfig::default()
    };
    let configs = vec![cfg; initials.len()];
    let (mut worst_ratio, mut worst_rise): (f64, f64) = (0.0, f64::NEG_INFINITY);
    for (k, res) in run_batch(&initials, &c, f.graph(), &configs)
        .into_iter()
        .enumerate()
    {
        let trace = res.map_err(|e| format!("run {k}: {e}"))?;
        ensure!(
            trace.event.is_none(),
            "run {k}: stopped early: {:?}",
            trace.event
        );
        let first = trace.metrics.first().unwrap().delta_norm;
        let last = trace.metrics.last().unwrap().delta_norm;
        let ratio = last / first;
        let rise = trace.max_v_increase.unwrap();
        ensure!(ratio <= 1e-3, "run {k}: |delta| ratio {ratio:e}");
        ensure!(rise <= 1e-9, "run {k}: V rose by {rise:e} in one step");
        worst_ratio = worst_ratio.max(ratio);
        worst_rise = worst_rise.max(rise);
    }
    Ok(format!(
        "50 runs, worst |delta(T)|/|delta(0)| {worst_ratio:.1e}, largest V step {worst_rise:.1e}, {excluded} starts resampled"
    ))
}

fn finite_difference_jacobian(
    f: &Framework,
    c: &BearingConstraints,
    p: &DVector<f64>,
) -> DMatrix<f64> {
    let h = 1e-6;
    let len = p.len();
    let mut j = DMatrix::zeros(len, len);
    for col in 0..len {
        let mut plus = p.clone();
        let mut minus = p.clone();
        plus[col] += h;
        minus[col] -= h;
        let diff = (control_velocity(f.graph(), c, &plus).unwrap()
            - control_velocity(f.graph(), c, &minus).unwrap())
            / (2.0 * h);
        j.set_column(col, &diff);
    }
    j
}

fn equilibria() -> Outcome {
    let f = fixtures::square();
    let c = BearingConstraints::from_framework(&f);
    let g = f.graph();
    let p_star = f.positions().clone();
    let reflected = geometry::point_reflection(&p_star, 2);
    let e = |x: bearingform::Error| x.to_string();

    let v0 = control_velocity(g, &c, &p_star).map_err(e)?.norm();
    let v1 = control_velocity(g, &c, &reflected).map_err(e)?.norm();
    ensure!(
        v0 <= 1e-12 && v1 <= 1e-12,
        "velocity {v0:e} at delta = 0, {v1:e} at delta = -2r*"
    );

    let a_ref = jacobian(g, &c, &reflected).map_err(e)?;
    let asym = (&a_ref - a_ref.transpose()).amax();
    ensure!(asym <= 1e-10, "Jacobian at -2r* asymmetric by {asym:e}");
    let eig = a_ref.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    ensure!(lo >= -1e-10, "Jacobian at -2r* has eigenvalue {lo:e}");
    ensure!(hi > 0.0, "Jacobian at -2r* has no positive eigenvalue");

    let a_des = jacobian(g, &c, &p_star).map_err(e)?;
    let neg = (&a_des + &a_ref).amax();
    ensure!(neg <= 1e-10, "J(0) + J(-2r*) = {neg:e}");

    let mut rng = rng(6);
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let pts = common::random_points(&mut rng, 4, 2, 0.3);
        let p = common::stacked(&pts);
        let gap = (jacobian(g, &c, &p).map_err(e)? - finite_difference_jacobian(&f, &c, &p)).amax();
        ensure!(
            gap <= 1e-5,
            "state {k}: Jacobian differs from finite differences by {gap:e}"
        );
        worst = worst.max(gap);
    }
    Ok(format!(
        "|v| {v0:.1e}/{v1:.1e}, eig(J(-2r*)) in [{lo:.2e}, {hi:.2e}], FD gap {worst:.1e}"
    ))
}

fn collision_avoidance() -> Outcome {
    let f = fixtures::square();
    let c = BearingConstraints::from_framework(&f);
    let p_star = f.positions().clone();
    let gamma = 0.5;
    let bound = bearingform::control_global::collision_bound(&p_star, 2, gamma)
        .map_err(|e| e.to_string())?;
    ensure!(
        (bound - 0.25).abs() < 1e-12,
        "collision bound {bound}, expected 0.25"
    );

    // starts on the sphere |r| = |r*| around the unit square, so that the
    // target is the unit square itself
    let r_star = geometry::centered(&p_star, 2);
    let radius = r_star.norm();
    let centroid = geometry::replicate(&geometry::centroid(&p_star, 2), 4);
    let translations = bearingform::linalg::translation_basis(4, 2);
    let mut rng = rng(7);
    let mut initials = Vec::new();
    let mut largest: f64 = 0.0;
    for _ in 0..100 {
        let raw = DVector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0));
        let mut w = bearingform::linalg::project_out(&raw, &translations);
        w -= &r_star * (w.dot(&r_star) / (radius * radius));
        w /= w.norm();
        let delta_norm = rng.gen_range(0.0..=0.9 * bound);
        let phi = 2.0 * (delta_norm / (2.0 * radius)).asin();
        let p0 = &centroid + &r_star * phi.cos() + &w * (radius * phi.sin());
        let d0 = (&p0 - &p_star).norm();
        ensure!(
            (d0 - delta_norm).abs() < 1e-12,
            "start construction off: {d0} vs {delta_norm}"
        );
        let t = compute_target(&c, f.graph(), &p0, RANK_TOL).map_err(|e| e.to_string())?;
        ensure!(
            (&t.p_star - &p_star).amax() < 1e-9,
            "start does not target the unit square"
        );
        largest = largest.max(d0);
        initials.push(InitialState::Global(p0));
    }
    let cfg = SimConfig {
        t_end: 20.0,
        gamma: Some(gamma),
        record_every: 1,
        ..SimConfig::default()
    };
    let configs = vec![cfg; initials.len()];
    let mut closest = f64::INFINITY;
    for (k, res) in run_batch(&initials, &c, f.graph(), &configs)
        .into_iter()
        .enumerate()
    {
        let trace = res.map_err(|e| format!("run {k}: {e}"))?;
        ensure!(trace.event.is_none(), "run {k}: {:?}", trace.event);
        let events = collision_events(&trace, gamma);
        ensure!(
            events.is_empty(),
            "run {k}: {} collision events, first {:?}",
            events.len(),
            events[0]
        );
        closest = closest.min(
            trace
                .metrics
                .iter()
                .map(|m| m.min_pair_distance)
                .fold(f64::INFINITY, f64::min),
        );
    }
    Ok(format!(
        "100 runs, |delta(0)| <= {largest:.3}, closest pair {closest:.3} > gamma {gamma}"
    ))
}

fn local_convergence() -> Outcome {
    let mut notes = Vec::new();
    let mut rng = rng(8);
    for (name, f) in [
        ("square", fixtures::square_3d()),
        ("cube", fixtures::cube()),
    ] {
        let c = BearingConstraints::from_framework(&f);
        let n = f.agent_count();
        let mut initials = Vec::new();
        let mut rejected = 0;
        while initials.len() < 20 {
            let rotations = random_rotations(&mut rng, n, std::f64::consts::FRAC_PI_3);
            let rots: Vec<Rotation> = rotations
                .iter()
                .map(|r| Rotation::new(*r).unwrap())
                .collect();
            if check_sync_assumption(&rots) != SyncAssumption::Satisfied {
                rejected += 1;
                continue;
            }
            initials.push(InitialState::Local {
                positions: unstack3(&random_positions(&mut rng, n, 3, 1.0)),
                rotations,
            });
        }
        let cfg = SimConfig {
            t_end: 40.0,
            mode: Mode::Local,
            record_every: 1000,
            ..SimConfig::default()
        };
        let configs = vec![cfg; initials.len()];
        let (mut sync, mut h, mut body): (f64, f64, f64) = (0.0, 0.0, 0.0);
        for (k, res) in run_batch(&initials, &c, f.graph(), &configs)
            .into_iter()
            .enumerate()
        {
            let trace = res.map_err(|e| format!("{name} run {k}: {e}"))?;
            ensure!(trace.event.is_none(), "{name} run {k}: {:?}", trace.event);
            let m = trace.final_metrics().unwrap();
            let (s, hn, b) = (
                m.sync_error.unwrap(),
                m.h_norm.unwrap(),
                m.body_bearing_error.unwrap(),
            );
            ensure!(s <= 1e-6, "{name} run {k}: sync error {s:e}");
            ensure!(hn <= 1e-6, "{name} run {k}: |h| {hn:e}");
            ensure!(b <= 1e-4, "{name} run {k}: body bearing error {b:e}");
            sync = sync.max(s);
            h = h.max(hn);
            body = body.max(b);
        }
        notes.push(format!(
            "{name}: sync {sync:.1e}, |h| {h:.1e}, bearing {body:.1e}, {rejected} orientation draws rejected"
        ));
    }
    Ok(notes.join("; "))
}

fn perpendicular_motions() -> Outcome {
    let mut rng = rng(9);
    let (mut worst_fwd, mut worst_back): (f64, f64) = (0.0, 0.0);
    for case in 0..50 {
        let n = rng.gen_range(3..=8);
        let rf = random_framework(&mut rng, n, 2);
        let f = &rf.framework;
        let r = f.rigidity_matrix();
        let rd = distance_rigidity_matrix(f);
        let null_r = rank_nullspace(&r, RANK_TOL)
            .map_err(|e| e.to_string())?
            .null_basis;
        let null_rd = rank_nullspace(&rd, RANK_TOL)
            .map_err(|e| e.to_string())?
            .null_basis;
        ensure!(
            null_r.ncols() == null_rd.ncols(),
            "case {case}: nullities differ"
        );
        for _ in 0..5 {
            let coeffs = DVector::from_fn(null_r.ncols(), |_, _| rng.gen_range(-1.0..1.0));
            let dp = &null_r * &coeffs;
            let res = (&rd * perp_motion(&dp, 2).unwrap()).norm() / dp.norm();
            ensure!(res <= 1e-8, "case {case}: |R_D perp(dp)| / |dp| = {res:e}");
            worst_fwd = worst_fwd.max(res);

            let coeffs = DVector::from_fn(null_rd.ncols(), |_, _| rng.gen_range(-1.0..1.0));
            let dq = &null_rd * &coeffs;
            let res = (&r * perp_motion_inverse(&dq, 2).unwrap()).norm() / dq.norm();
            ensure!(res <= 1e-8, "case {case}: |R perp^-1(dq)| / |dq| = {res:e}");
            worst_back = worst_back.max(res);
        }
    }
    Ok(format!(
        "50 frameworks, residuals {worst_fwd:.1e} and {worst_back:.1e}"
    ))
}

fn distance_identity() -> Outcome {
    let mut rng = rng(10);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let n = rng.gen_range(3..=8);
        let rf = random_framework(&mut rng, n, 2);
        let via = bearing_matrix_via_distance(&rf.framework).map_err(|e| e.to_string())?;
        let oracle = bearing_jacobian(&rf.points, &rf.edges);
        let res = (&via - &oracle)
            .amax()
            .max((rf.framework.rigidity_matrix() - &oracle).amax());
        ensure!(res <= 1e-10, "case {case}: residual {res:e}");
        worst = worst.max(res);
    }
    Ok(format!("50 frameworks, residual {worst:.1e}"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/data/square_constraints.json"
    );
    let mut finals = Vec::new();
    let mut csvs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_bearingform"))
            .args([
                "simulate",
                spec,
                "--mode",
                "global",
                "--t-end",
                "5",
                "--seed",
                "42",
                "--record-every",
                "50",
            ])
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(
            status.status.success(),
            "simulate failed: {}",
            String::from_utf8_lossy(&status.stderr)
        );
        let metrics: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join(format!("run{run}.metrics.json"))).unwrap(),
        )
        .map_err(|e| e.to_string())?;
        finals.push(metrics["summary"].clone());
        csvs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    let mut compared = 0;
    for key in [
        "bearing_error",
        "delta_norm",
        "lyapunov",
        "centroid_drift",
        "scale_drift",
        "min_pair_distance",
        "theta",
    ] {
        let a = finals[0][key]["final"]
            .as_f64()
            .ok_or(format!("missing {key}"))?;
        let b = finals[1][key]["final"]
            .as_f64()
            .ok_or(format!("missing {key}"))?;
        ensure!((a - b).abs() <= 1e-12, "{key}: {a} vs {b}");
        compared += 1;
    }
    ensure!(csvs[0] == csvs[1], "trajectory files differ");
    Ok(format!(
        "{compared} final metrics equal, trajectories byte-identical"
    ))
}
