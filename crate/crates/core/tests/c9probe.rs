use crlab::frames::{generate, StructureKind};
use crlab::holder;
use crlab::iteration::{run_sequence, RunConfig};
use crlab::smoothing::Mollifier;

#[test]
fn dim3_fallback_probe() {
    let st = generate(
        &StructureKind::RandomIntegrable { seed: 5, eps: 3e-4, h_scale: 0.0 },
        2,
        1.0,
        27,
    )
    .unwrap();
    let moll = Mollifier::build(3, 4).unwrap();
    let cfg = RunConfig { t0: 0.15, sigma0: 1.0 / 25.0, max_steps: 3, strict: false, ..RunConfig::default() };
    let out = match run_sequence(&st, &cfg, &moll) { Ok(o) => o, Err(e) => { eprintln!("run err: {e:?}"); return; } };
    let mut deltas = vec![holder::norm(&st.error_form().unwrap(), 1.0).unwrap()];
    for (stj, d) in &out.trajectory {
        deltas.push(d.delta_after[1]);
        let e = stj.error_form().unwrap();
        for frac in [0.9f64, 0.75, 0.6] {
            let core = stj.domain.with_rho(frac * stj.domain.rho).mask;
            let ec = e.restrict(&core).unwrap();
            eprintln!("  core frac={frac}: nodes={} c1={:.3e} sup={:.3e}",
                core.len(), crlab::holder::norm(&ec, 1.0).unwrap(), ec.sup());
        }
        eprintln!("diag: j={} delta_after={:?} i_sup={:?} defect={:.3} err_origin={:.2e} op_limited={}", d.j, d.delta_after, d.i_sup, d.defect, d.error_origin, d.operator_limited);
    }
    eprintln!("trace: {:?} halt {}", deltas, out.halt);
}
