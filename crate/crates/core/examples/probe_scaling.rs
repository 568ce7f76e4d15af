use microlam_core::scaling::*;

fn main() {
    let t0 = std::time::Instant::now();
    let cal = Calibration::reference().unwrap();
    println!("calibration ({:?}): {:?}", t0.elapsed(), cal);

    // Branching sweep, eps = 1e-2 .. 1e-5 at half decades.
    let eps: Vec<f64> = (0..7).map(|k| 10f64.powf(-2.0 - 0.5 * k as f64)).collect();
    let cfg = SweepConfig {
        kind: SweepKind::Branching { theta: 0.3, lambda: 0.5 },
        eps,
        seed: 7,
        grid_cells: 64,
        verify_rows: 0,
    };
    let t1 = std::time::Instant::now();
    let rows = run_sweep(&cfg, &cal).unwrap();
    println!("branching sweep took {:?}", t1.elapsed());
    for r in &rows {
        println!("eps={:.2e} params={} E={:.6e} checks={}", r.eps, r.params, r.e_total, r.checks);
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps, r.e_total)).collect();
    let fit = fit_scaling(&pts, FitModel::Algebraic).unwrap();
    println!("branching fit: alpha={:.4} r2={:.5}", fit.rate, fit.r_squared);

    // T3 sweep, 1e-2 .. 1e-6.
    let eps: Vec<f64> = (0..9).map(|k| 10f64.powf(-2.0 - 0.5 * k as f64)).collect();
    let cfg = SweepConfig {
        kind: SweepKind::IteratedLaminate,
        eps,
        seed: 7,
        grid_cells: 64,
        verify_rows: 0,
    };
    let t2 = std::time::Instant::now();
    let rows = run_sweep(&cfg, &cal).unwrap();
    println!("t3 sweep took {:?}", t2.elapsed());
    for r in &rows {
        println!("eps={:.2e} params={} E={:.6e} checks={}", r.eps, r.params, r.e_total, r.checks);
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps, r.e_total)).collect();
    let st = fit_scaling(&pts, FitModel::Stretched).unwrap();
    let al = fit_scaling(&pts, FitModel::Algebraic).unwrap();
    println!("t3 stretched: c={:.4} r2={:.6}; algebraic r2={:.6}", st.rate, st.r_squared, al.r_squared);
}
