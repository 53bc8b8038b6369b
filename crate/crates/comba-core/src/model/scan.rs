//! Zero-order-hold discretization and the selective scan over the hop axis.
//!
//! Channels are laid out state-major within a channel: column c·N_s + s of
//! any (N × d·N_s) matrix is state s of channel c. The scan itself is a
//! single custom tape op: the forward saves every intermediate state and the
//! backward replays the recurrence in reverse.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Ā = exp(Δ⊙a), B̄ = Δ⊙φ(Δ⊙a)⊙b with φ(u) = (e^u − 1)/u — algebraically
/// ((exp(Δa) − 1)/a)·b, but stable through a → 0 and Δ → 0. All three
/// operands must share one shape (broadcast Δ beforehand if needed).
pub fn zoh_discretize(tape: &mut Tape, a: Var, delta: Var, b: Var) -> Result<(Var, Var)> {
    for (name, v) in [("a", a), ("delta", delta), ("b", b)] {
        if !tape.value(v).is_finite() {
            return Err(Error::invalid(format!(
                "zoh_discretize: non-finite values in {name}"
            )));
        }
    }
    let da = tape.mul(delta, a);
    let abar = tape.exp(da);
    let phi = tape.expm1_over_x(da);
    let dphi = tape.mul(delta, phi);
    let bbar = tape.mul(dphi, b);
    Ok((abar, bbar))
}

/// Run h_k = Ā_k ⊙ h_{k−1} + B̄_k ⊙ x_k, y_k[c] = Σ_s C_k[c,s]·h_k[c,s]
/// over T tokens. `abar`, `bbar`, `c` are per-token N × d·N_s vars, `x`
/// per-token N × d. Returns one N × (T·d) var; token k's outputs live in
/// columns [k·d, (k+1)·d).
pub fn selective_scan(
    tape: &mut Tape,
    abar: &[Var],
    bbar: &[Var],
    c: &[Var],
    x: &[Var],
    d: usize,
    n_s: usize,
) -> Result<Var> {
    let t_len = x.len();
    if t_len == 0 {
        return Err(Error::invalid("selective_scan over an empty sequence"));
    }
    if abar.len() != t_len || bbar.len() != t_len || c.len() != t_len {
        return Err(Error::shape(
            "selective_scan: per-token list lengths differ",
        ));
    }
    let n = tape.value(x[0]).rows();
    let dn = d * n_s;
    for k in 0..t_len {
        if tape.value(x[k]).shape() != [n, d] {
            return Err(Error::shape("selective_scan: x token shape"));
        }
        for v in [abar[k], bbar[k], c[k]] {
            if tape.value(v).shape() != [n, dn] {
                return Err(Error::shape("selective_scan: gate shape"));
            }
        }
    }

    // forward, saving h after every step (h_all[0] is the zero init)
    let mut h_all: Vec<Tensor> = Vec::with_capacity(t_len + 1);
    h_all.push(Tensor::zeros(&[n, dn]));
    let mut y = Tensor::zeros(&[n, t_len * d]);
    for k in 0..t_len {
        let ab = tape.value(abar[k]);
        let bb = tape.value(bbar[k]);
        let ck = tape.value(c[k]);
        let xk = tape.value(x[k]);
        let prev = &h_all[k];
        let mut h = Tensor::zeros(&[n, dn]);
        for i in 0..n {
            let (hr, pr) = (h.row_mut(i), prev.row(i));
            let (ar, br, xr) = (ab.row(i), bb.row(i), xk.row(i));
            for (ch, &xv) in xr.iter().enumerate().take(d) {
                for s in 0..n_s {
                    let col = ch * n_s + s;
                    hr[col] = ar[col] * pr[col] + br[col] * xv;
                }
            }
        }
        for i in 0..n {
            let (hr, cr) = (h.row(i), ck.row(i));
            let yr = y.row_mut(i);
            for ch in 0..d {
                let mut acc = 0.0;
                for s in 0..n_s {
                    let col = ch * n_s + s;
                    acc += cr[col] * hr[col];
                }
                yr[k * d + ch] = acc;
            }
        }
        h_all.push(h);
    }

    // parents: abar tokens, then bbar, then c, then x
    let mut parents = Vec::with_capacity(4 * t_len);
    parents.extend_from_slice(abar);
    parents.extend_from_slice(bbar);
    parents.extend_from_slice(c);
    parents.extend_from_slice(x);

    let var = tape.push_op(
        y,
        parents,
        Box::new(move |g, p, _| {
            let (abar_v, rest) = p.split_at(t_len);
            let (bbar_v, rest) = rest.split_at(t_len);
            let (c_v, x_v) = rest.split_at(t_len);

            let mut g_abar = vec![Tensor::zeros(&[n, dn]); t_len];
            let mut g_bbar = vec![Tensor::zeros(&[n, dn]); t_len];
            let mut g_c = vec![Tensor::zeros(&[n, dn]); t_len];
            let mut g_x = vec![Tensor::zeros(&[n, d]); t_len];

            // gh carries ∂L/∂h_k while stepping k = T−1 .. 0
            let mut gh = Tensor::zeros(&[n, dn]);
            for k in (0..t_len).rev() {
                let ck = c_v[k];
                let hk = &h_all[k + 1];
                let hprev = &h_all[k];
                let ab = abar_v[k];
                let bb = bbar_v[k];
                let xk = x_v[k];
                for i in 0..n {
                    let gy = g.row(i);
                    let ghr = gh.row_mut(i);
                    let (cr, hr, hpr) = (ck.row(i), hk.row(i), hprev.row(i));
                    let (ar, br, xr) = (ab.row(i), bb.row(i), xk.row(i));
                    let gcr = g_c[k].row_mut(i);
                    let gar = g_abar[k].row_mut(i);
                    let gbr = g_bbar[k].row_mut(i);
                    let gxr = g_x[k].row_mut(i);
                    for ch in 0..d {
                        let gyv = gy[k * d + ch];
                        let mut gx_acc = 0.0;
                        for s in 0..n_s {
                            let col = ch * n_s + s;
                            // y_k = ⟨C_k, h_k⟩ plus the carry through h_{k+1}
                            let ghv = gyv * cr[col] + ghr[col];
                            gcr[col] = gyv * hr[col];
                            gar[col] = ghv * hpr[col];
                            gbr[col] = ghv * xr[ch];
                            gx_acc += ghv * br[col];
                            // becomes the carry for step k−1: Ā_k ⊙ gh_k
                            ghr[col] = ghv * ar[col];
                        }
                        gxr[ch] = gx_acc;
                    }
                }
            }
            let mut out = Vec::with_capacity(4 * t_len);
            out.extend(g_abar);
            out.extend(g_bbar);
            out.extend(g_c);
            out.extend(g_x);
            out
        }),
    );
    Ok(var)
}

/// Per-position context windows over the token list: window k concatenates
/// tokens k−w..k+w with edge replication at the boundaries, giving each a
/// width of (2w+1)·d. With w = 0 this is the token list itself.
pub fn context_windows(tape: &mut Tape, tokens: &[Var], w: usize) -> Vec<Var> {
    let t_len = tokens.len() as i64;
    (0..t_len)
        .map(|k| {
            if w == 0 {
                return tokens[k as usize];
            }
            let parts: Vec<Var> = (k - w as i64..=k + w as i64)
                .map(|i| tokens[i.clamp(0, t_len - 1) as usize])
                .collect();
            tape.concat_cols(&parts)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    fn leafs(tape: &mut Tape, ts: &[Tensor]) -> Vec<Var> {
        ts.iter().map(|t| tape.leaf(t.clone())).collect()
    }

    #[test]
    fn zoh_positive_a_closed_form() {
        // a = 1, Δ = ln 2, b = 1 → Ā = 2, B̄ = (2−1)/1 = 1
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(1.0));
        let d = tape.leaf(Tensor::scalar(std::f64::consts::LN_2));
        let b = tape.leaf(Tensor::scalar(1.0));
        let (abar, bbar) = zoh_discretize(&mut tape, a, d, b).unwrap();
        assert!((tape.value(abar).item() - 2.0).abs() < 1e-12);
        assert!((tape.value(bbar).item() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zoh_negative_a_closed_form() {
        // a = −1, Δ = 1, b = 1 → Ā = e⁻¹, B̄ = 1 − e⁻¹
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(-1.0));
        let d = tape.leaf(Tensor::scalar(1.0));
        let b = tape.leaf(Tensor::scalar(1.0));
        let (abar, bbar) = zoh_discretize(&mut tape, a, d, b).unwrap();
        let e = std::f64::consts::E;
        assert!((tape.value(abar).item() - 1.0 / e).abs() < 1e-9);
        assert!((tape.value(bbar).item() - (1.0 - 1.0 / e)).abs() < 1e-9);
    }

    #[test]
    fn zoh_vanishing_step_limit() {
        // Δ → 0 ⇒ Ā → 1, B̄ → 0
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(-0.7));
        let d = tape.leaf(Tensor::scalar(1e-8));
        let b = tape.leaf(Tensor::scalar(2.5));
        let (abar, bbar) = zoh_discretize(&mut tape, a, d, b).unwrap();
        assert!((tape.value(abar).item() - 1.0).abs() < 1e-6);
        assert!(tape.value(bbar).item().abs() < 1e-6);
    }

    #[test]
    fn zoh_rejects_non_finite() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(f64::NAN));
        let d = tape.leaf(Tensor::scalar(1.0));
        let b = tape.leaf(Tensor::scalar(1.0));
        assert!(zoh_discretize(&mut tape, a, d, b).is_err());
    }

    #[test]
    fn scan_hand_recurrence() {
        // Ā = 0.5, B̄ = 1, C = 1, x = [1, 1] → h = [1, 1.5], y = [1, 1.5]
        let mut tape = Tape::new();
        let half = || Tensor::from_rows(&[vec![0.5]]);
        let ab = leafs(&mut tape, &[half(), half()]);
        let one = || Tensor::from_rows(&[vec![1.0]]);
        let bb = leafs(&mut tape, &[one(), one()]);
        let c = leafs(&mut tape, &[one(), one()]);
        let x = leafs(&mut tape, &[one(), one()]);
        let y = selective_scan(&mut tape, &ab, &bb, &c, &x, 1, 1).unwrap();
        let out = tape.value(y);
        assert_eq!(out.shape(), &[1, 2]);
        assert!((out.data()[0] - 1.0).abs() < 1e-15);
        assert!((out.data()[1] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn scan_with_zero_decay_is_memoryless() {
        // Ā = 0 → y_k = ⟨C_k, B̄_k⟩·x_k exactly, no history
        let mut rng = RngState::new(5);
        let (n, d, n_s, t_len) = (3, 2, 2, 4);
        let dn = d * n_s;
        let mut tape = Tape::new();
        let zeros: Vec<Var> = (0..t_len)
            .map(|_| tape.leaf(Tensor::zeros(&[n, dn])))
            .collect();
        let mut rand_list = |shape: &[usize]| -> Vec<Var> {
            (0..t_len)
                .map(|_| {
                    let mut t = Tensor::zeros(shape);
                    t.fill_normal(&mut rng, 1.0);
                    tape.leaf(t)
                })
                .collect()
        };
        let bb = rand_list(&[n, dn]);
        let c = rand_list(&[n, dn]);
        let x = rand_list(&[n, d]);
        let y = selective_scan(&mut tape, &zeros, &bb, &c, &x, d, n_s).unwrap();
        let out = tape.value(y);
        for k in 0..t_len {
            for i in 0..n {
                for ch in 0..d {
                    let mut want = 0.0;
                    for s in 0..n_s {
                        let col = ch * n_s + s;
                        want += tape.value(c[k]).at(i, col)
                            * tape.value(bb[k]).at(i, col)
                            * tape.value(x[k]).at(i, ch);
                    }
                    assert!((out.at(i, k * d + ch) - want).abs() < 1e-12);
                }
            }
        }
    }

    /// Scalar-loop reference: the recurrence written the slow obvious way.
    fn naive_scan(
        abar: &[Tensor],
        bbar: &[Tensor],
        c: &[Tensor],
        x: &[Tensor],
        d: usize,
        n_s: usize,
    ) -> Tensor {
        let t_len = x.len();
        let n = x[0].rows();
        let mut y = Tensor::zeros(&[n, t_len * d]);
        for i in 0..n {
            for ch in 0..d {
                let mut h = vec![0.0; n_s];
                for k in 0..t_len {
                    for (s, hs) in h.iter_mut().enumerate() {
                        let col = ch * n_s + s;
                        *hs = abar[k].at(i, col) * *hs + bbar[k].at(i, col) * x[k].at(i, ch);
                    }
                    let mut acc = 0.0;
                    for (s, hs) in h.iter().enumerate() {
                        acc += c[k].at(i, ch * n_s + s) * hs;
                    }
                    y.set(i, k * d + ch, acc);
                }
            }
        }
        y
    }

    #[test]
    fn scan_matches_naive_reference_on_random_instances() {
        let mut rng = RngState::new(9);
        for trial in 0..200 {
            let n = 1 + rng.below(4);
            let d = 1 + rng.below(8);
            let n_s = 1 + rng.below(4);
            let t_len = 1 + rng.below(12);
            let dn = d * n_s;
            let mk = |rng: &mut RngState, shape: &[usize]| {
                let mut t = Tensor::zeros(shape);
                t.fill_normal(rng, 1.0);
                t
            };
            let ab: Vec<Tensor> = (0..t_len)
                .map(|_| mk(&mut rng, &[n, dn]).map(|v| (0.9 * v).tanh()))
                .collect();
            let bb: Vec<Tensor> = (0..t_len).map(|_| mk(&mut rng, &[n, dn])).collect();
            let cc: Vec<Tensor> = (0..t_len).map(|_| mk(&mut rng, &[n, dn])).collect();
            let xx: Vec<Tensor> = (0..t_len).map(|_| mk(&mut rng, &[n, d])).collect();
            let mut tape = Tape::new();
            let abv = leafs(&mut tape, &ab);
            let bbv = leafs(&mut tape, &bb);
            let ccv = leafs(&mut tape, &cc);
            let xxv = leafs(&mut tape, &xx);
            let y = selective_scan(&mut tape, &abv, &bbv, &ccv, &xxv, d, n_s).unwrap();
            let want = naive_scan(&ab, &bb, &cc, &xx, d, n_s);
            assert!(
                tape.value(y).max_abs_diff(&want) <= 1e-12,
                "trial {trial} (n={n} d={d} n_s={n_s} T={t_len})"
            );
        }
    }

    #[test]
    fn scan_rejects_empty_and_ragged_input() {
        let mut tape = Tape::new();
        assert!(selective_scan(&mut tape, &[], &[], &[], &[], 1, 1).is_err());
        let a = tape.leaf(Tensor::zeros(&[2, 2]));
        let x = tape.leaf(Tensor::zeros(&[2, 2]));
        assert!(selective_scan(&mut tape, &[a], &[a], &[a, a], &[x], 2, 1).is_err());
        // wrong gate width
        let bad = tape.leaf(Tensor::zeros(&[2, 3]));
        assert!(selective_scan(&mut tape, &[bad], &[a], &[a], &[x], 2, 1).is_err());
    }

    #[test]
    fn scan_gradients_match_finite_differences() {
        let mut rng = RngState::new(11);
        let (n, d, n_s, t_len) = (2usize, 3usize, 2usize, 4usize);
        let dn = d * n_s;
        let mk = |rng: &mut RngState, shape: &[usize]| {
            let mut t = Tensor::zeros(shape);
            t.fill_normal(rng, 0.7);
            t
        };
        let ab: Vec<Tensor> = (0..t_len).map(|_| mk(&mut rng, &[n, dn])).collect();
        let bb: Vec<Tensor> = (0..t_len).map(|_| mk(&mut rng, &[n, dn])).collect();
        let cc: Vec<Tensor> = (0..t_len).map(|_| mk(&mut rng, &[n, dn])).collect();
        let xx: Vec<Tensor> = (0..t_len).map(|_| mk(&mut rng, &[n, d])).collect();
        let probe = mk(&mut rng, &[n, t_len * d]);

        let run = |ab: &[Tensor], bb: &[Tensor], cc: &[Tensor], xx: &[Tensor]| {
            let mut tape = Tape::new();
            let abv = leafs(&mut tape, ab);
            let bbv = leafs(&mut tape, bb);
            let ccv = leafs(&mut tape, cc);
            let xxv = leafs(&mut tape, xx);
            let y = selective_scan(&mut tape, &abv, &bbv, &ccv, &xxv, d, n_s).unwrap();
            let p = tape.leaf(probe.clone());
            let m = tape.mul(y, p);
            let s = tape.sum(m);
            (tape, abv, bbv, ccv, xxv, s)
        };

        let (tape, abv, bbv, ccv, xxv, s) = run(&ab, &bb, &cc, &xx);
        let grads = tape.backward(s);

        // finite-difference every coordinate of every input family
        let h = 1e-6;
        let families: Vec<(&str, Vec<Tensor>, Vec<Var>)> = vec![
            ("abar", ab.clone(), abv),
            ("bbar", bb.clone(), bbv),
            ("c", cc.clone(), ccv),
            ("x", xx.clone(), xxv),
        ];
        for (name, base, vars) in &families {
            for k in 0..t_len {
                let analytic = grads.get(vars[k]).unwrap();
                for i in 0..base[k].numel() {
                    let eval = |delta: f64| {
                        let mut ab2 = ab.clone();
                        let mut bb2 = bb.clone();
                        let mut cc2 = cc.clone();
                        let mut xx2 = xx.clone();
                        let target = match *name {
                            "abar" => &mut ab2[k],
                            "bbar" => &mut bb2[k],
                            "c" => &mut cc2[k],
                            _ => &mut xx2[k],
                        };
                        target.data_mut()[i] += delta;
                        let (tape, _, _, _, _, s) = run(&ab2, &bb2, &cc2, &xx2);
                        tape.value(s).item()
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    let an = analytic.data()[i];
                    let rel = (fd - an).abs() / (fd.abs() + an.abs() + 1e-8);
                    assert!(rel < 1e-5, "{name}[{k}] coord {i}: fd {fd} vs an {an}");
                }
            }
        }
    }

    #[test]
    fn windows_edge_replicate_and_degenerate_at_zero() {
        let mut tape = Tape::new();
        let t0 = tape.leaf(Tensor::from_rows(&[vec![0.0, 0.5]]));
        let t1 = tape.leaf(Tensor::from_rows(&[vec![1.0, 1.5]]));
        let t2 = tape.leaf(Tensor::from_rows(&[vec![2.0, 2.5]]));
        let toks = [t0, t1, t2];
        let w1 = context_windows(&mut tape, &toks, 1);
        assert_eq!(w1.len(), 3);
        // first window replicates the left edge: [t0 t0 t1]
        assert_eq!(tape.value(w1[0]).data(), &[0.0, 0.5, 0.0, 0.5, 1.0, 1.5]);
        // middle window is the true neighborhood
        assert_eq!(tape.value(w1[1]).data(), &[0.0, 0.5, 1.0, 1.5, 2.0, 2.5]);
        // last window replicates the right edge
        assert_eq!(tape.value(w1[2]).data(), &[1.0, 1.5, 2.0, 2.5, 2.0, 2.5]);
        // w = 0 returns the token vars themselves, not copies
        let w0 = context_windows(&mut tape, &toks, 0);
        assert_eq!(w0, toks);
    }

    #[test]
    fn identical_window_content_gives_identical_output() {
        // two positions whose windows hold the same tensors produce the same
        // projection input
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_rows(&[vec![1.0]]));
        let toks = [a, a, a, a];
        let ws = context_windows(&mut tape, &toks, 1);
        assert_eq!(tape.value(ws[1]), tape.value(ws[2]));
    }
}
