//! Batch entry point: wires JSON configs to the library experiments and
//! writes JSON verdicts, JSON-lines trajectories, and plot-ready CSV tables.
//!
//! Exit codes: 0 pass/certified, 1 usage error, 2 experiment failure or
//! infeasible schedule, 3 hypothesis or admissibility violation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use crlab::domain::{random_h, Domain, EstimateConstants};
use crlab::frames::{dilate, generate, StructureKind};
use crlab::grid::{fit_slope, GridField, Lattice, Mask};
use crlab::holder::{self, audit_rule, Rule};
use crlab::homotopy::{audit_p_estimate, HomotopyOperator};
use crlab::iteration::{self, invert_map, run_sequence};
use crlab::schedule::{admissible, evolve, find_t0, ScheduleParams};
use crlab::smoothing::{commutator, commutator_direct, oscillatory_field, smooth, Mollifier};
use crlab::{CrError, EmbeddingState};

#[derive(Parser)]
#[command(name = "crlab", version, about = "Numerical experiments for a CR embedding iteration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Directory for reports (created if missing).
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
    /// Seed for every random ingredient; fixed seed means byte-identical CSV.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Certify an iteration schedule from a JSON parameter file.
    Certify {
        #[command(flatten)]
        common: CommonOpts,
        /// JSON file with schedule parameters; missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Horizon: number of schedule steps to advance.
        #[arg(long, default_value_t = 1000)]
        max_steps: usize,
        /// Search for the largest feasible ln t0 before certifying.
        #[arg(long)]
        find_t0: bool,
    },
    /// Run the alteration/renormalization sequence on a named structure.
    Iterate {
        #[command(flatten)]
        common: CommonOpts,
        /// quadric | cubic-bump | random
        #[arg(long, default_value = "random")]
        structure: String,
        #[arg(long, default_value_t = 27)]
        resolution: usize,
        /// CR dimension parameter n (embedding target C^n, manifold dim 2n-1).
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        max_steps: usize,
        #[arg(long, default_value_t = 0.15)]
        t0: f64,
        /// Halt on the first failed inductive hypothesis instead of recording it.
        #[arg(long)]
        strict: bool,
    },
    /// Rescale a structure by increasing factors and fit the coefficient decay.
    DilationStudy {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value = "cubic-bump")]
        structure: String,
        /// Comma-separated dilation factors.
        #[arg(long, default_value = "2,4,8,16", value_delimiter = ',')]
        rhos: Vec<f64>,
        #[arg(long, default_value_t = 41)]
        resolution: usize,
        /// Resolution of the base structure the dilations resample.
        #[arg(long, default_value_t = 129)]
        base_resolution: usize,
    },
    /// Run the audit suite for one named estimate.
    VerifyLemma {
        #[command(flatten)]
        common: CommonOpts,
        /// 1.2 | 2.1 | 4.1 | 4.2 | 5.2 | 6.1 | 7.1 | 7.2 | 9.1 | 9.2 | 9.3 | 9.4 | 11.1 | 11.2 | 11.3
        id: String,
        #[arg(long, default_value_t = 33)]
        resolution: usize,
        #[arg(long, default_value_t = 300)]
        max_steps: usize,
    },
    /// Generate a structure and write its description to disk.
    GenerateStructure {
        #[command(flatten)]
        common: CommonOpts,
        /// quadric | cubic-bump | random
        #[arg(long, default_value = "random")]
        structure: String,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 27)]
        resolution: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version are not usage errors
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Certify { common, config, max_steps, find_t0 } => {
            cmd_certify(&common, config.as_deref(), max_steps, find_t0)
        }
        Command::Iterate { common, structure, resolution, n, max_steps, t0, strict } => {
            cmd_iterate(&common, &structure, resolution, n, max_steps, t0, strict)
        }
        Command::DilationStudy { common, structure, rhos, resolution, base_resolution } => {
            cmd_dilation(&common, &structure, &rhos, resolution, base_resolution)
        }
        Command::VerifyLemma { common, id, resolution, max_steps } => {
            cmd_verify(&common, &id, resolution, max_steps)
        }
        Command::GenerateStructure { common, structure, n, resolution } => {
            cmd_generate(&common, &structure, n, resolution)
        }
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                CrError::Hypothesis(_) | CrError::Inadmissible(_) => 3,
                CrError::Infeasible => 2,
                CrError::Io(_) | CrError::Serde(_) => 1,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn write_report(dir: &Path, name: &str, body: &str) -> crlab::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), body)?;
    println!("wrote {}", dir.join(name).display());
    Ok(())
}

fn structure_kind(name: &str, seed: u64) -> crlab::Result<StructureKind> {
    match name {
        "quadric" => Ok(StructureKind::Quadric),
        "cubic-bump" => Ok(StructureKind::CubicBump { eps: 0.3 }),
        "random" => Ok(StructureKind::RandomIntegrable { seed, eps: 2e-3, h_scale: 2e-3 }),
        other => Err(CrError::Degenerate(format!("unknown structure '{other}'"))),
    }
}

// ------------------------------------------------------------------- certify

fn load_params(config: Option<&Path>) -> crlab::Result<ScheduleParams> {
    let mut p = ScheduleParams::default();
    let Some(path) = config else { return Ok(p) };
    let text = fs::read_to_string(path)?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    let obj = v
        .as_object()
        .ok_or_else(|| CrError::Degenerate("config must be a JSON object".into()))?;
    let mut f = |key: &str, slot: &mut f64| {
        if let Some(x) = obj.get(key).and_then(|x| x.as_f64()) {
            *slot = x;
        }
    };
    f("s", &mut p.s);
    f("kappa", &mut p.kappa);
    f("mu", &mut p.mu);
    f("m", &mut p.m);
    f("a", &mut p.a);
    f("b", &mut p.b);
    f("ln_t0", &mut p.ln_t0);
    f("sigma0", &mut p.sigma0);
    f("rho0", &mut p.rho0);
    f("beta", &mut p.beta);
    f("epsilon", &mut p.epsilon);
    f("n0", &mut p.n0);
    f("delta0_kmu", &mut p.delta0_kmu);
    f("c0_hat", &mut p.c0_hat);
    f("b13_0", &mut p.b13_0);
    if let Some(t0) = obj.get("t0").and_then(|x| x.as_f64()) {
        p.ln_t0 = t0.ln();
    }
    if let Some(k) = obj.get("k").and_then(|x| x.as_u64()) {
        p.k = k as u32;
    }
    if let Some(c) = obj.get("constants") {
        p.constants = serde_json::from_value::<EstimateConstants>(c.clone())?;
    }
    Ok(p)
}

fn cmd_certify(
    common: &CommonOpts,
    config: Option<&Path>,
    max_steps: usize,
    do_find_t0: bool,
) -> crlab::Result<u8> {
    let mut p = load_params(config)?;
    let (adm, violations) = admissible(&p);
    if !adm {
        let body = serde_json::to_string_pretty(&json!({
            "certified": false,
            "admissible": false,
            "violations": violations,
        }))?;
        write_report(&common.output_dir, "verdict.json", &body)?;
        return Ok(3);
    }
    if do_find_t0 {
        match find_t0(&p, max_steps) {
            Ok(lnt) => p.ln_t0 = lnt,
            Err(CrError::Infeasible) => {
                let body = serde_json::to_string_pretty(&json!({
                    "certified": false,
                    "admissible": true,
                    "infeasible": "no t0 in the search range certifies this horizon",
                }))?;
                write_report(&common.output_dir, "verdict.json", &body)?;
                return Ok(2);
            }
            Err(e) => return Err(e),
        }
    }
    let (states, verdict) = evolve(&p, max_steps)?;

    let mut csv = String::from(
        "j,rho,ln_t,ln_delta_1,ln_delta_kmu,ln_p,ln_q,ln_a,ln_big_b,ln_small_b,ln_big_e,ln_small_e,ln_f\n",
    );
    for st in &states {
        let c = &st.cascade;
        csv.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            st.j, st.rho, st.ln_t, st.ln_delta_1, st.ln_delta_kmu,
            c.p, c.q, c.a, c.big_b, c.small_b, c.big_e, c.small_e, c.f,
        ));
    }
    write_report(&common.output_dir, "schedule.csv", &csv)?;
    let body = serde_json::to_string_pretty(&json!({
        "certified": verdict.pass,
        "admissible": true,
        "params": p,
        "verdict": verdict,
    }))?;
    write_report(&common.output_dir, "verdict.json", &body)?;
    println!(
        "schedule {} over {} steps (ln t0 = {:.3})",
        if verdict.pass { "certified" } else { "NOT certified" },
        max_steps,
        p.ln_t0
    );
    Ok(if verdict.pass { 0 } else { 2 })
}

// ------------------------------------------------------------------- iterate

fn cmd_iterate(
    common: &CommonOpts,
    structure: &str,
    resolution: usize,
    n: usize,
    max_steps: usize,
    t0: f64,
    strict: bool,
) -> crlab::Result<u8> {
    let kind = structure_kind(structure, common.seed)?;
    let st = generate(&kind, n, 1.0, resolution)?;
    let moll = Mollifier::build(st.domain.dim(), 4)?;
    let cfg = iteration::RunConfig { t0, max_steps, strict, ..Default::default() };
    let out = run_sequence(&st, &cfg, &moll)?;
    let mut lines = String::new();
    for (_, diag) in &out.trajectory {
        lines.push_str(&serde_json::to_string(diag)?);
        lines.push('\n');
    }
    write_report(&common.output_dir, "trajectory.jsonl", &lines)?;
    println!("{} steps, halt: {}", out.trajectory.len(), out.halt);
    let hypothesis_halt = out.halt != "completed" && out.halt != "grid-limited";
    Ok(if hypothesis_halt { 3 } else { 0 })
}

// ------------------------------------------------------------- dilation study

fn cmd_dilation(
    common: &CommonOpts,
    structure: &str,
    rhos: &[f64],
    resolution: usize,
    base_resolution: usize,
) -> crlab::Result<u8> {
    if rhos.len() < 2 {
        return Err(CrError::Degenerate("need at least two dilation factors".into()));
    }
    let kind = structure_kind(structure, common.seed)?;
    let base = generate(&kind, 2, 1.0, base_resolution)?;
    let mut csv = String::from("rho,error_c2,a_sup,b_sup\n");
    let (mut ln_r, mut ln_e, mut ln_a, mut ln_b) = (vec![], vec![], vec![], vec![]);
    for &rho in rhos {
        let d = dilate(&base, rho, resolution)?;
        let e = holder::norm(&d.error_form()?, 2.0)?;
        let (asup, bsup) = (d.a.sup(), d.b.sup());
        csv.push_str(&format!("{rho},{e:.12e},{asup:.12e},{bsup:.12e}\n"));
        ln_r.push(rho.ln());
        ln_e.push(e.ln());
        ln_a.push(asup.ln());
        ln_b.push(bsup.ln());
    }
    write_report(&common.output_dir, "dilation.csv", &csv)?;
    let (se, sa, sb) = (
        fit_slope(&ln_r, &ln_e),
        fit_slope(&ln_r, &ln_a),
        fit_slope(&ln_r, &ln_b),
    );
    println!("slopes: error {se:.3} (expect -1), A {sa:.3} (expect -2), B {sb:.3} (expect -1)");
    let pass = (se + 1.0).abs() <= 0.2 && (sa + 2.0).abs() <= 0.2 && (sb + 1.0).abs() <= 0.2;
    Ok(if pass { 0 } else { 2 })
}

// -------------------------------------------------------------- verify-lemma

#[derive(Serialize)]
struct AuditRow {
    case: String,
    lhs: f64,
    rhs: f64,
    ratio: f64,
    pass: bool,
}

fn finish_audit(common: &CommonOpts, id: &str, rows: Vec<AuditRow>) -> crlab::Result<u8> {
    let mut csv = String::from("case,lhs,rhs,ratio,pass\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{}\n",
            r.case, r.lhs, r.rhs, r.ratio, r.pass
        ));
    }
    write_report(&common.output_dir, &format!("audit-{id}.csv"), &csv)?;
    let pass = rows.iter().all(|r| r.pass);
    println!(
        "audit {id}: {}/{} cases pass",
        rows.iter().filter(|r| r.pass).count(),
        rows.len()
    );
    Ok(if pass { 0 } else { 2 })
}

fn cmd_verify(common: &CommonOpts, id: &str, resolution: usize, max_steps: usize) -> crlab::Result<u8> {
    match id {
        "1.2" => verify_norm_algebra(common, resolution),
        "2.1" => verify_domain_geometry(common, resolution),
        "4.1" => verify_inverse_map(common, resolution),
        "4.2" | "9.1" | "9.2" | "9.3" | "9.4" => verify_step_audits(common, id, resolution),
        "5.2" => verify_smoothing(common),
        "6.1" => verify_homotopy(common, resolution),
        "7.1" => verify_commutator(common),
        "7.2" => verify_error_split(common, resolution),
        "11.1" | "11.2" | "11.3" => verify_schedule(common, id, max_steps),
        other => Err(CrError::Degenerate(format!("unknown lemma id '{other}'"))),
    }
}

fn verify_norm_algebra(common: &CommonOpts, resolution: usize) -> crlab::Result<u8> {
    let lat = Lattice::cube(2, 1.0, resolution.max(17));
    let full = Mask::full(lat);
    let mut rows = Vec::new();
    for seed in 0..5u64 {
        let u = oscillatory_field(&full, 1.0, 40.0, common.seed + seed);
        let v = oscillatory_field(&full, 1.5, 40.0, common.seed + 100 + seed);
        let r = audit_rule(Rule::Product { u: &u, v: &v, rho: 1.0, a: 2.0 }, 8.0)?;
        rows.push(AuditRow {
            case: format!("product_{seed}"),
            lhs: r.lhs,
            rhs: r.rhs_skeleton,
            ratio: r.ratio,
            pass: r.pass,
        });
        let r = holder::audit_interpolation(&u, 1.0, 1.0, 3.0, 0.5, 8.0)?;
        rows.push(AuditRow {
            case: format!("interpolation_{seed}"),
            lhs: r.lhs,
            rhs: r.rhs_skeleton,
            ratio: r.ratio,
            pass: r.pass,
        });
        let r = audit_rule(
            Rule::Convexity {
                u: &u,
                v: &v,
                rho: 1.0,
                tau: 1.0,
                ab1: (0.0, 2.0),
                ab2: (2.0, 0.0),
                lambda: 0.5,
            },
            8.0,
        )?;
        rows.push(AuditRow {
            case: format!("convexity_{seed}"),
            lhs: r.lhs,
            rhs: r.rhs_skeleton,
            ratio: r.ratio,
            pass: r.pass,
        });
    }
    finish_audit(common, "1.2", rows)
}

fn verify_domain_geometry(common: &CommonOpts, resolution: usize) -> crlab::Result<u8> {
    let lat = Lattice::cube(3, 2.0f64.sqrt(), resolution);
    let mut rows = Vec::new();
    for i in 0..50u64 {
        let target = 0.02 + 0.005 * i as f64;
        let h = random_h(&lat, common.seed + i, target);
        let dom = Domain::from_h(2, 1.0, lat.clone(), h);
        let rep = dom.check_inclusions()?;
        rows.push(AuditRow {
            case: format!("inclusion_{i}"),
            lhs: rep.inner_radius,
            rhs: rep.outer_radius,
            ratio: rep.c2,
            pass: rep.pass,
        });
        let (d, ok) = dom.boundary_distance(0.25)?;
        rows.push(AuditRow {
            case: format!("collar_{i}"),
            lhs: dom.rho * 0.25,
            rhs: d,
            ratio: if d > 0.0 { dom.rho * 0.25 / d } else { f64::INFINITY },
            pass: ok,
        });
    }
    finish_audit(common, "2.1", rows)
}

fn verify_inverse_map(common: &CommonOpts, resolution: usize) -> crlab::Result<u8> {
    let dom = Domain::ball(2, 1.0, resolution);
    let sigma = 0.25;
    let mut rows = Vec::new();
    for i in 0..20u64 {
        let seed = common.seed + i;
        let amp = 1e-3 + 1e-4 * seed as f64;
        let f2 = GridField::from_fn_multi(dom.mask.clone(), 2, |p, c| {
            if c == 0 {
                Complex64::new(amp * p[0] * p[0], amp * p[1] * p[2])
            } else {
                Complex64::new(amp * p[2] * p[2], 0.0)
            }
        });
        let pair = invert_map(&f2, &dom, sigma)?;
        // fitted constant of ||g_2||_1 <= c ||f_2||_1
        let gn = holder::norm(&pair.g2, 1.0)?;
        let fn1 = holder::norm(&f2, 1.0)?;
        rows.push(AuditRow {
            case: format!("map_{i}"),
            lhs: gn,
            rhs: fn1,
            ratio: gn / fn1,
            pass: pair.roundtrip <= 10.0 * dom.spacing() && gn <= 2.0 * fn1,
        });
    }
    finish_audit(common, "4.1", rows)
}

fn verify_step_audits(common: &CommonOpts, id: &str, resolution: usize) -> crlab::Result<u8> {
    let kind = structure_kind("random", common.seed + 7)?;
    let st = generate(&kind, 2, 1.0, resolution)?;
    let moll = Mollifier::build(st.domain.dim(), 4)?;
    let cfg = iteration::RunConfig { t0: 0.15, max_steps: 3, strict: false, ..Default::default() };
    let out = run_sequence(&st, &cfg, &moll)?;
    let mut rows = Vec::new();
    for (state, diag) in &out.trajectory {
        let sp = state.domain.spacing();
        let (case, lhs, rhs) = match id {
            "4.2" | "9.2" => (
                "nesting",
                f64::from(u8::from(diag.nesting)),
                1.0,
            ),
            "9.1" => ("origin_error", diag.error_origin, 10.0 * sp * sp),
            "9.3" => ("roundtrip", diag.roundtrip, 10.0 * sp),
            "9.4" => ("h_increment", diag.h_increment_c2, 1.0),
            _ => unreachable!(),
        };
        let pass = if case == "nesting" { diag.nesting } else { lhs <= rhs };
        rows.push(AuditRow {
            case: format!("step{}_{case}", diag.j),
            lhs,
            rhs,
            ratio: if rhs > 0.0 { lhs / rhs } else { f64::INFINITY },
            pass,
        });
    }
    finish_audit(common, id, rows)
}

fn verify_smoothing(common: &CommonOpts) -> crlab::Result<u8> {
    let lat = Lattice::cube(1, 1.0, 513);
    let full = Mask::full(lat.clone());
    let moll = Mollifier::build(1, 4)?;
    let out_mask = Mask::from_predicate(lat.clone(), {
        let lat = lat.clone();
        move |i| lat.point(i)[0].abs() < 0.75
    });
    let ts = [0.025f64, 0.05, 0.1, 0.2];
    let ln_ts: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let mut rows = Vec::new();
    for (a, b, remainder) in [(2.0f64, 0.0f64, false), (3.0, 1.0, false), (0.0, 2.0, true), (1.0, 3.0, true)] {
        let u = oscillatory_field(&full, b, 200.0, common.seed + a as u64 + 10 * b as u64);
        let ln_norms: Vec<f64> = ts
            .iter()
            .map(|&t| {
                let (su, _) = smooth(&u, t, &moll, &out_mask)?;
                let v = if remainder {
                    u.restrict(&out_mask)?.zip(&su, |x, y| x - y)
                } else {
                    su
                };
                holder::norm(&v, a).map(f64::ln)
            })
            .collect::<crlab::Result<_>>()?;
        let slope = fit_slope(&ln_ts, &ln_norms);
        rows.push(AuditRow {
            case: format!("{}_a{a}_b{b}", if remainder { "remainder" } else { "smooth" }),
            lhs: slope,
            rhs: b - a,
            ratio: slope - (b - a),
            pass: (slope - (b - a)).abs() <= 0.3,
        });
    }
    finish_audit(common, "5.2", rows)
}

fn verify_homotopy(common: &CommonOpts, resolution: usize) -> crlab::Result<u8> {
    let st = EmbeddingState::quadric(2, 1.0, resolution.min(33));
    let op = HomotopyOperator::build(&st)?;
    let mut rows = Vec::new();
    for seed in 0..5u64 {
        let u = oscillatory_field(&st.domain.mask, 2.0, 20.0, common.seed + seed);
        let phi = st.dbar_m(&u)?;
        let defect = op.homotopy_defect(&st, &phi)?;
        rows.push(AuditRow {
            case: format!("defect_{seed}"),
            lhs: defect,
            rhs: 1e-2,
            ratio: defect / 1e-2,
            pass: defect <= 1e-2,
        });
        for a in [0.0, 1.0] {
            let r = audit_p_estimate(&op, &st, &phi, a, 0.25, &EstimateConstants::default())?;
            rows.push(AuditRow {
                case: format!("p_estimate_{seed}_a{a}"),
                lhs: r.lhs,
                rhs: r.rhs_skeleton,
                ratio: r.ratio,
                pass: r.ratio.is_finite(),
            });
        }
    }
    finish_audit(common, "6.1", rows)
}

fn verify_commutator(common: &CommonOpts) -> crlab::Result<u8> {
    let lat = Lattice::cube(2, 1.0, 161);
    let full = Mask::full(lat.clone());
    let moll = Mollifier::build(2, 3)?;
    let out_mask = Mask::from_predicate(lat.clone(), {
        let lat = lat.clone();
        move |i| {
            let p = lat.point(i);
            p[0].abs() < 0.35 && p[1].abs() < 0.35
        }
    });
    let inner = Mask::from_predicate(lat.clone(), {
        let lat = lat.clone();
        move |i| {
            let p = lat.point(i);
            p[0].abs() < 0.3 && p[1].abs() < 0.3
        }
    });
    let mut rows = Vec::new();
    for seed in 0..5u64 {
        let u = oscillatory_field(&full, 0.5, 30.0, common.seed + seed);
        let w = GridField::from_fn(full.clone(), |p| {
            Complex64::new(1.0 + 0.5 * p[0] - 0.3 * p[1], 0.0)
        });
        let v1 = commutator(&u, &w, 0.3, &moll, &out_mask)?;
        let v2 = commutator_direct(&u, &w, 0.3, &moll, &out_mask)?;
        let d = v1.restrict(&inner)?.zip(&v2.restrict(&inner)?, |a, b| a - b).sup();
        let scale = v2.restrict(&inner)?.sup().max(1e-12);
        rows.push(AuditRow {
            case: format!("agreement_{seed}"),
            lhs: d,
            rhs: scale,
            ratio: d / scale,
            pass: d / scale <= 0.15,
        });
    }
    finish_audit(common, "7.1", rows)
}

fn verify_error_split(common: &CommonOpts, resolution: usize) -> crlab::Result<u8> {
    let kind = structure_kind("random", common.seed + 7)?;
    let st = generate(&kind, 2, 1.0, resolution)?;
    let moll = Mollifier::build(st.domain.dim(), 4)?;
    let cfg = iteration::RunConfig { t0: 0.15, max_steps: 2, strict: false, ..Default::default() };
    let out = run_sequence(&st, &cfg, &moll)?;
    let mut rows = Vec::new();
    for (_, diag) in &out.trajectory {
        let scale = diag.i_sup.iter().fold(0.0f64, |m, &x| m.max(x)).max(1e-15);
        rows.push(AuditRow {
            case: format!("split_residual_{}", diag.j),
            lhs: diag.sum_residual,
            rhs: scale,
            ratio: diag.sum_residual / scale,
            pass: diag.sum_residual <= 0.05 * scale + 1e-12,
        });
    }
    finish_audit(common, "7.2", rows)
}

fn verify_schedule(common: &CommonOpts, id: &str, max_steps: usize) -> crlab::Result<u8> {
    let mut rows = Vec::new();
    match id {
        "11.1" => {
            let p = ScheduleParams::default();
            let (ok, _) = admissible(&p);
            rows.push(AuditRow {
                case: "reference_admissible".into(),
                lhs: f64::from(u8::from(ok)),
                rhs: 1.0,
                ratio: 1.0,
                pass: ok,
            });
            for (name, build) in [
                ("kappa_too_large", {
                    let mut q = p.clone();
                    q.kappa = 1.3;
                    q
                }),
                ("m_too_small", {
                    let mut q = p.clone();
                    q.m = 3.0;
                    q
                }),
                ("mu_too_small", {
                    let mut q = p.clone();
                    q.mu = 2.0;
                    q
                }),
            ] {
                let (ok, _) = admissible(&build);
                rows.push(AuditRow {
                    case: format!("reject_{name}"),
                    lhs: f64::from(u8::from(ok)),
                    rhs: 0.0,
                    ratio: 0.0,
                    pass: !ok,
                });
            }
        }
        "11.2" => {
            let mut p = ScheduleParams::default();
            p.ln_t0 = find_t0(&p, max_steps)?;
            let (_, verdict) = evolve(&p, max_steps)?;
            rows.push(AuditRow {
                case: "certifies_at_found_t0".into(),
                lhs: p.ln_t0,
                rhs: 0.0,
                ratio: verdict.q_max,
                pass: verdict.pass && p.ln_t0.is_finite(),
            });
        }
        "11.3" => {
            let mut p = ScheduleParams::default();
            p.ln_t0 = find_t0(&p, max_steps)?;
            let (states, verdict) = evolve(&p, max_steps)?;
            let p0 = states[0].cascade.p;
            let sqrt_eps = p.epsilon.sqrt();
            let bound = p0 - (1.0 - sqrt_eps).ln();
            rows.push(AuditRow {
                case: "p_sum_geometric_bound".into(),
                lhs: verdict.ln_sum_p,
                rhs: bound,
                ratio: (verdict.ln_sum_p - bound).exp(),
                pass: verdict.q_max > sqrt_eps || verdict.ln_sum_p <= bound + 1e-9,
            });
        }
        _ => unreachable!(),
    }
    finish_audit(common, id, rows)
}

// -------------------------------------------------------- generate-structure

fn cmd_generate(
    common: &CommonOpts,
    structure: &str,
    n: usize,
    resolution: usize,
) -> crlab::Result<u8> {
    let kind = structure_kind(structure, common.seed)?;
    let st = generate(&kind, n, 1.0, resolution)?;
    let rep = st.normalization_report()?;
    let e = st.error_form()?;
    let body = serde_json::to_string_pretty(&json!({
        "structure": structure,
        "n": n,
        "resolution": resolution,
        "seed": common.seed,
        "domain": st.domain.to_descriptor(),
        "a_origin": rep.a_origin,
        "b_origin": rep.b_origin,
        "levi_deviation": rep.levi_deviation,
        "error_sup": e.sup(),
        "error_c1": holder::norm(&e, 1.0)?,
    }))?;
    write_report(&common.output_dir, "structure.json", &body)?;
    Ok(0)
}
