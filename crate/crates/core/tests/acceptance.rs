//! Acceptance gate. Prints one line per criterion and exits non-zero if any fails.
//!
//! `ACCEPTANCE_ONLY=1,4` runs a subset.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surfrbf::experiments::{
    generate_node_sets, laplacian_table, run_convergence, stability_scan, ConvergenceConfig,
    SphereHarmonic, TorusPolynomial,
};
use surfrbf::geometry::vec3::tangential;
use surfrbf::geometry::{generate_nodes, surface_by_name, RedBloodCell, Torus, UnitSphere};
use surfrbf::kernels::{make_imq, make_matern, Kernel};
use surfrbf::linalg::{cholesky, eigenvalues, lu, DenseMatrix};
use surfrbf::operators::build_b_matrices;
use surfrbf::reaction::{run_spiral, run_turing, turing_preset, SpiralConfig, SpiralParams, TuringConfig};
use surfrbf::timestepping::{bdf4_run, sbdf_run, DiffusionProblem, ImexOptions, ImexSystem, Startup};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sci(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" ")
}

fn torus_counts() -> [usize; 3] {
    [500, 1000, 2000]
}

fn sphere_operator() -> Outcome {
    let kernel = make_imq(2.8).unwrap();
    let sets = generate_node_sets(&UnitSphere, &[256, 576, 1024], 1).map_err(|e| e.to_string())?;
    let t = laplacian_table(&SphereHarmonic, &kernel, &sets).map_err(|e| e.to_string())?;
    let l2: Vec<f64> = t.rows.iter().map(|r| r.l2).collect();
    let decreasing = l2.windows(2).all(|w| w[1] < w[0]);
    check(decreasing && l2[2] <= 1e-2, format!("rel l2 {}, need decreasing and <= 1e-2", sci(&l2)))
}

fn torus_operator() -> Outcome {
    let kernel = make_matern(4.0, 4.0).unwrap();
    let sets = generate_node_sets(&Torus, &torus_counts(), 1).map_err(|e| e.to_string())?;
    let t = laplacian_table(&TorusPolynomial, &kernel, &sets).map_err(|e| e.to_string())?;
    let l2: Vec<f64> = t.rows.iter().map(|r| r.l2).collect();
    let order = t.order_l2.unwrap_or(f64::NAN);
    let decreasing = l2.windows(2).all(|w| w[1] < w[0]);
    check(decreasing && order >= 3.0, format!("rel l2 {}, order {order:.2} (floor 3)", sci(&l2)))
}

fn torus_diffusion() -> Outcome {
    let sets = generate_node_sets(&Torus, &torus_counts(), 1).map_err(|e| e.to_string())?;
    let cfg = ConvergenceConfig::default();
    let run = |k: Kernel| run_convergence(&TorusPolynomial, &k, &sets, &cfg).map_err(|e| e.to_string());
    let m4 = run(make_matern(4.0, 4.0).unwrap())?;
    let m6 = run(make_matern(6.0, 8.0).unwrap())?;
    let imq = run(make_imq(3.0).unwrap())?;
    let (o4, o6) = (m4.order_l2.unwrap_or(f64::NAN), m6.order_l2.unwrap_or(f64::NAN));
    let last = |t: &surfrbf::experiments::ConvergenceTable| t.rows[2].l2;
    let (e4, e6, ei) = (last(&m4), last(&m6), last(&imq));
    check(
        o4 >= 4.0 && o6 > o4 && ei < e4 && ei < e6,
        format!("orders matern4 {o4:.2}, matern6 {o6:.2}; N=2000 l2 matern4 {e4:.2e}, matern6 {e6:.2e}, imq {ei:.2e}"),
    )
}

fn spectra() -> Outcome {
    let kernel = make_imq(2.8).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, n) in [("sphere", 1024), ("torus", 1000)] {
        let s = surface_by_name(name).map_err(|e| e.to_string())?;
        let ns = generate_nodes(s.as_ref(), n, 1).map_err(|e| e.to_string())?;
        let r = stability_scan(name, &kernel, &ns).map_err(|e| e.to_string())?;
        ok &= r.left_half_plane(1e-6) && r.conjugate_asymmetry <= 1e-8 * r.max_abs;
        lines.push(format!(
            "{name} max re {:.2e}, max |l| {:.1}, conj asym {:.1e}",
            r.max_real, r.max_abs, r.conjugate_asymmetry
        ));
    }
    check(ok, lines.join("; "))
}

fn halving_order(dts: &[f64], errs: &[f64]) -> f64 {
    let k = dts.len() - 1;
    (errs[0] / errs[k]).ln() / (dts[0] / dts[k]).ln()
}

fn temporal_orders() -> Outcome {
    let dts = [0.02, 0.01, 0.005];
    // u' = -2u, u = e^{-2t}
    let l = DenseMatrix::from_diagonal(&[-2.0]);
    let exact = |t: f64, out: &mut [f64]| out[0] = (-2.0 * t).exp();
    let bdf: Vec<f64> = dts
        .iter()
        .map(|&dt| {
            let p = DiffusionProblem { l: &l, delta: 1.0, forcing: None, u0: vec![1.0], exact: Some(&exact) };
            let tr = bdf4_run(&p, dt, 1.0, Startup::Exact, 0).unwrap();
            (tr.u[0] - (-2.0f64).exp()).abs()
        })
        .collect();
    // u' = -u + sin t (explicit), u(0) = 0
    let l = DenseMatrix::from_diagonal(&[-1.0]);
    let react = |t: f64, _u: &[f64], _v: &[f64], fu: &mut [f64], fv: &mut [f64]| {
        fu[0] = t.sin();
        fv[0] = 0.0;
    };
    let sol = |t: f64| 0.5 * (t.sin() - t.cos() + (-t).exp());
    let pair = |t: f64, u: &mut [f64], v: &mut [f64]| {
        u[0] = sol(t);
        v[0] = 0.0;
    };
    let sbdf: Vec<f64> = dts
        .iter()
        .map(|&dt| {
            let s = ImexSystem {
                l: &l,
                delta_u: 1.0,
                delta_v: 0.0,
                reaction: &react,
                u0: vec![0.0],
                v0: vec![0.0],
                exact: Some(&pair),
            };
            let tr = sbdf_run(&s, dt, (2.0 / dt).round() as usize, 3, &ImexOptions::default()).unwrap();
            (tr.u[0] - sol(tr.t)).abs()
        })
        .collect();
    let (pb, ps) = (halving_order(&dts, &bdf), halving_order(&dts, &sbdf));
    check(pb >= 3.7 && ps >= 2.7, format!("bdf4 {pb:.2} (floor 3.7), sbdf3 {ps:.2} (floor 2.7)"))
}

fn turing() -> Outcome {
    let preset = turing_preset("rbc-spots").map_err(|e| e.to_string())?;
    let ns = generate_nodes(&RedBloodCell::new(), 2000, 1).map_err(|e| e.to_string())?;
    let cfg = TuringConfig { max_steps: 100_000, ..Default::default() };
    let r = run_turing("rbc", &make_imq(4.0).unwrap(), &ns, &preset.params, Some(&preset), &cfg)
        .map_err(|e| e.to_string())?;
    let finite = r.u.iter().chain(&r.v).all(|x| x.is_finite());
    check(
        r.steady && r.pattern.u_std > 1e-2 && finite,
        format!(
            "steady {} after {} steps (rate {:.2e}, tol 1e-4), std(u) {:.3}",
            r.steady, r.steps, r.final_rate, r.pattern.u_std
        ),
    )
}

fn spiral() -> Outcome {
    let ns = generate_nodes(&UnitSphere, 2000, 1).map_err(|e| e.to_string())?;
    let cfg = SpiralConfig { dt: 0.02, t_end: 45.0, ..Default::default() };
    let r = run_spiral("sphere", &make_imq(2.8).unwrap(), &ns, &SpiralParams::sphere(), &cfg)
        .map_err(|e| e.to_string())?;
    let w = r.waves.as_ref().ok_or("no wave statistics")?;
    let bounded = w.u_min >= -0.1 && w.u_max <= 1.1;
    let active = w.probe_variance.iter().all(|&v| v > 1e-4);
    check(
        bounded && active,
        format!(
            "u in [{:.4}, {:.4}] (need [-0.1, 1.1]), probe variance min {:.3e} from t={:.2}",
            w.u_min,
            w.u_max,
            w.min_variance(),
            w.window_start
        ),
    )
}

/// Bessel K of order `beta` from its integral representation; the trapezoid
/// rule converges geometrically for this integrand.
fn bessel_k(beta: f64, z: f64) -> f64 {
    let h = 0.01;
    let mut sum = 0.5 * (-z).exp();
    let mut k = 1;
    loop {
        let t = k as f64 * h;
        let term = (-z * t.cosh()).exp() * (beta * t).cosh();
        sum += term;
        if term < 1e-300 || term < 1e-18 * sum {
            break;
        }
        k += 1;
    }
    sum * h
}

fn gamma_half(m: usize) -> f64 {
    // Gamma(m + 1/2)
    (1..=m).fold(std::f64::consts::PI.sqrt(), |g, j| g * (j as f64 - 0.5))
}

fn det_oracle(a: &DenseMatrix) -> f64 {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        if p != c {
            m.swap(p, c);
            det = -det;
        }
        det *= m[c][c];
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    det
}

fn kernels_and_linalg() -> Outcome {
    let mut worst_phi: f64 = 0.0;
    let mut worst_eta: f64 = 0.0;
    for nu in [3usize, 4, 5, 6, 7] {
        let beta = nu as f64 - 1.5;
        let c = 2f64.powf(1.0 - beta) / gamma_half(nu - 2);
        for eps in [1.0, 4.0] {
            let k = make_matern(nu as f64, eps).unwrap();
            for z in [0.05, 0.3, 1.0, 2.5, 7.0, 15.0, 30.0] {
                let r = z / eps;
                let oracle = c * z.powf(beta) * bessel_k(beta, z);
                worst_phi = worst_phi.max((k.phi(r) / oracle - 1.0).abs());
            }
        }
    }
    for k in [make_matern(3.0, 1.5).unwrap(), make_matern(6.0, 4.0).unwrap(), make_imq(2.8).unwrap()] {
        for r in [0.05, 0.2, 0.7, 1.3] {
            let h = 1e-5 * r;
            let fd = (k.phi(r + h) - k.phi(r - h)) / (2.0 * h) / r;
            worst_eta = worst_eta.max((fd / k.eta(r) - 1.0).abs());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 60;
    let m = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let spd = {
        let mut a = m.transpose().matmul(&m);
        for i in 0..n {
            a.row_mut(i)[i] += n as f64;
        }
        a
    };
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rel = |y: &[f64]| {
        let num = y.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        num / x.iter().map(|a| a * a).sum::<f64>().sqrt()
    };
    let chol_err = rel(&cholesky(&spd).map_err(|e| e.to_string())?.solve_vec(&spd.matvec(&x)));
    let lu_err = rel(&lu(&m).map_err(|e| e.to_string())?.solve_vec(&m.matvec(&x)));

    let a = DenseMatrix::from_fn(30, 30, |_, _| rng.gen_range(-1.0..1.0));
    let eigs = eigenvalues(&a).map_err(|e| e.to_string())?;
    let sum: num_complex::Complex64 = eigs.iter().sum();
    let prod: num_complex::Complex64 = eigs.iter().product();
    let tr_err = (sum.re - a.trace()).abs().max(sum.im.abs()) / a.trace().abs().max(a.norm_fro());
    let det = det_oracle(&a);
    let det_err = ((prod.re - det).abs() + prod.im.abs()) / det.abs();

    check(
        worst_phi <= 1e-10 && worst_eta <= 1e-6 && chol_err <= 1e-10 && lu_err <= 1e-10 && tr_err <= 1e-6 && det_err <= 1e-6,
        format!(
            "matern vs bessel {worst_phi:.1e}, eta vs fd {worst_eta:.1e}, chol {chol_err:.1e}, lu {lu_err:.1e}, trace {tr_err:.1e}, det {det_err:.1e}"
        ),
    )
}

fn projection_algebra() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut diag: f64 = 0.0;
    let mut nodes = 0;
    let kernel = make_imq(3.0).unwrap();
    for name in ["sphere", "torus", "rbc", "cyclide", "bretzel2"] {
        let s = surface_by_name(name).map_err(|e| e.to_string())?;
        let ns = generate_nodes(s.as_ref(), 200, 1).map_err(|e| e.to_string())?;
        for &n in &ns.normals {
            for e in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] {
                let pe = tangential(n, e);
                let ppe = tangential(n, pe);
                worst = (0..3).fold(worst, |w, i| w.max((ppe[i] - pe[i]).abs()));
            }
            let pn = tangential(n, n);
            worst = pn.iter().fold(worst, |w, x| w.max(x.abs()));
        }
        nodes += ns.len();
        for b in build_b_matrices(&kernel, &ns) {
            diag = b.diagonal().iter().fold(diag, |d, x| d.max(x.abs()));
        }
    }
    check(
        worst <= 1e-12 && diag == 0.0,
        format!("{nodes} nodes on 5 surfaces: max |P^2-P|, |Pn| {worst:.1e}; max |B_ii| {diag:e}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 9] = [
        ("sphere operator oracle", sphere_operator, 60),
        ("torus operator oracle", torus_operator, 300),
        ("torus forced diffusion", torus_diffusion, 900),
        ("spectral stability", spectra, 600),
        ("temporal orders", temporal_orders, 10),
        ("turing run", turing, 1800),
        ("spiral run", spiral, 1800),
        ("kernel and linalg properties", kernels_and_linalg, 30),
        ("projection algebra", projection_algebra, 5),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed();
        let late = secs > Duration::from_secs(*budget);
        let (pass, detail) = match outcome {
            Ok(d) if !late => (true, d),
            Ok(d) => (false, format!("{d}; over the {budget} s budget")),
            Err(d) => (false, d),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {id} {name}: {} ({detail}) [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            secs.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
