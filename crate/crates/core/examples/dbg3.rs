use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsetrack_core::prox::{combined_prox, soft_threshold, ProxParams};
use sparsetrack_core::solver::{objective, oracle, ModelWeights, SolveOpts};

// APG with warm start, returning best iterate
fn apg(y: &DVector<f64>, d: &DMatrix<f64>, w: &ModelWeights, opts: &SolveOpts,
       a0: &DVector<f64>, e0: &DVector<f64>) -> (DVector<f64>, DVector<f64>, f64, usize) {
    let lip = w.lipschitz;
    let prox = ProxParams::new(w.l1_weight() / lip, w.l0_weight() / lip).unwrap();
    let (mut ap, mut ac) = (a0.clone(), a0.clone());
    let (mut ep, mut ec) = (e0.clone(), e0.clone());
    let (mut tp, mut tc) = (1.0f64, 1.0f64);
    let mut best_obj = objective(y, d, &ac, &ec, w).unwrap();
    let (mut ba, mut be) = (ac.clone(), ec.clone());
    let mut iters = 0;
    for it in 1..=opts.max_iter {
        let mom = (tp - 1.0) / tc;
        let za = &ac + (&ac - &ap) * mom;
        let ze = &ec + (&ec - &ep) * mom;
        let r = d * &za + &ze - y;
        let ga = d.tr_mul(&r);
        let an = (&za - &ga / lip).map(|v| combined_prox(v, &prox));
        let en = (&ze - &r / lip).map(|v| soft_threshold(v, w.beta / lip));
        let diff = (&an - &ac).amax().max((&en - &ec).amax());
        let obj = objective(y, d, &an, &en, w).unwrap();
        if obj <= best_obj { best_obj = obj; ba = an.clone(); be = en.clone(); }
        ap = ac; ac = an; ep = ec; ec = en;
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * tc * tc).sqrt());
        tp = tc; tc = tn;
        iters = it;
        if diff < opts.tol { break; }
    }
    (ba, be, best_obj, iters)
}

fn polish(y: &DVector<f64>, d: &DMatrix<f64>, w: &ModelWeights,
          a0: &DVector<f64>, e0: &DVector<f64>) -> (DVector<f64>, DVector<f64>, f64, usize) {
    let prox = ProxParams::new(w.l1_weight(), w.l0_weight()).unwrap();
    let mut alpha = a0.clone();
    let mut e = e0.clone();
    let mut best_obj = objective(y, d, &alpha, &e, w).unwrap();
    let (mut ba, mut be) = (alpha.clone(), e.clone());
    let mut n = 0;
    for it in 1..=100 {
        let c = d.tr_mul(&(y - &e));
        let an = c.map(|v| combined_prox(v, &prox));
        let en = (y - d * &an).map(|v| soft_threshold(v, w.beta));
        let diff = (&an - &alpha).amax().max((&en - &e).amax());
        alpha = an; e = en;
        let obj = objective(y, d, &alpha, &e, w).unwrap();
        if obj <= best_obj { best_obj = obj; ba = alpha.clone(); be = e.clone(); }
        n = it;
        if diff < 1e-12 { break; }
    }
    (ba, be, best_obj, n)
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x534f_4c56);
    let instances: Vec<(DMatrix<f64>, DVector<f64>, ModelWeights)> = (0..200)
        .map(|_| {
            let gauss = DMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
            let d = gauss.qr().q();
            let y = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let w = ModelWeights::new(
                rng.random_range(0.1..1.0), rng.random_range(0.0..1.0),
                rng.random_range(0.1..1.0), 2.0,
            ).unwrap();
            (d, y, w)
        })
        .collect();

    let alpha_pts = oracle::grid_points(-3.0, 3.0, 0.01);
    let e_pts = oracle::grid_points(-3.0, 3.0, 0.01);
    let opts = SolveOpts::default();

    let strategies: Vec<(&str, Vec<f64>)> = vec![
        ("zero-start only", vec![1.0]),
        ("2-stage (0, 1)", vec![0.0, 1.0]),
        ("3-stage (0, 0.5, 1)", vec![0.0, 0.5, 1.0]),
        ("4-stage (0, .25, .5, 1)", vec![0.0, 0.25, 0.5, 1.0]),
    ];
    for (name, stages) in &strategies {
        let mut fails = 0; let mut max_gap = 0.0f64; let mut total_iters = 0usize;
        for (d, y, w) in &instances {
            let mut a = DVector::zeros(2);
            let mut e = DVector::zeros(4);
            let mut best = f64::INFINITY;
            let (mut ba, mut be) = (a.clone(), e.clone());
            for &frac in stages {
                let ws = ModelWeights::new(
                    w.lambda * (w.gamma + (1.0 - w.gamma) * frac),
                    // keep l1 weight = lambda*gamma, scale l0 weight by frac:
                    // lambda' * gamma' = lambda*gamma ; lambda'*(1-gamma') = frac*lambda*(1-gamma)
                    w.lambda * w.gamma / (w.lambda * (w.gamma + (1.0 - w.gamma) * frac)),
                    w.beta, w.lipschitz,
                ).unwrap();
                let (a2, e2, _, it) = apg(y, d, &ws, &opts, &a, &e);
                total_iters += it;
                a = a2; e = e2;
                let obj_true = objective(y, d, &a, &e, w).unwrap();
                if obj_true <= best { best = obj_true; ba = a.clone(); be = e.clone(); }
            }
            let (pa, pe, pobj, pit) = polish(y, d, w, &ba, &be);
            total_iters += pit;
            let _ = (pa, pe);
            let final_obj = best.min(pobj);
            let e_refs: Vec<&[f64]> = (0..4).map(|_| e_pts.as_slice()).collect();
            let omin = oracle::min_objective(y, d, w, &alpha_pts, &e_refs);
            let gap = final_obj - omin;
            if gap > 1e-2 { fails += 1; }
            max_gap = max_gap.max(gap);
        }
        println!("{name}: fails {fails}, max gap {max_gap:.5}, avg iters/instance {:.1}", total_iters as f64 / 200.0);
    }
}
