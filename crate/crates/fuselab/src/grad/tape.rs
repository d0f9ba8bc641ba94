//! Array-valued reverse-mode tape over the fusion pipeline's primitives.
//!
//! Nodes are appended in topological order during the forward pass; the
//! backward pass walks the record once in reverse with a fixed reduction
//! order, so losses and gradients are bitwise reproducible. The tape is
//! generic over the scalar: `f64` gives first-order gradients, [`Dual`]
//! gives exact Hessian-vector products through the same code path.
//!
//! [`Dual`]: super::dual::Dual

use crate::heatmap::GridShape;

use super::dual::Scalar;

/// Primitive operations. `Warp` is the bilinear-sample primitive producing
/// the stacked per-target-cell weight maps; `FuseMatVec` is the additive
/// fusion contraction.
#[derive(Debug, Clone)]
pub enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// Multiply by an f64 constant.
    Scale(usize, f64),
    Exp(usize),
    /// x - max(x); the subtracted maximum is treated as a constant, which
    /// leaves softmax gradients exact because softmax is invariant to it.
    MaxSubtract(usize),
    /// Sum all entries into a length-1 node.
    Sum(usize),
    /// Vector times a length-1 scalar node.
    MulScalar(usize, usize),
    /// Reciprocal of a length-1 node.
    Recip(usize),
    /// sum((a - b)^2) into a length-1 node.
    SqDiffSum(usize, usize),
    /// Per-target-cell bilinear warp of `base` by `thetas` (6 per target
    /// cell), producing an (n_cells x n_cells) weight stack.
    Warp {
        base: usize,
        thetas: usize,
        grid: GridShape,
    },
    /// target + weights * source, with weights a stacked (n x n) node.
    FuseMatVec {
        target: usize,
        weights: usize,
        source: usize,
    },
}

pub struct Tape<T: Scalar> {
    ops: Vec<Op>,
    vals: Vec<Vec<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            ops: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, id: usize) -> &[T] {
        &self.vals[id]
    }

    fn push(&mut self, op: Op, val: Vec<T>) -> usize {
        self.ops.push(op);
        self.vals.push(val);
        self.vals.len() - 1
    }

    pub fn leaf(&mut self, values: Vec<T>) -> usize {
        self.push(Op::Leaf, values)
    }

    pub fn leaf_f64(&mut self, values: &[f64]) -> usize {
        self.leaf(values.iter().map(|v| T::from_f64(*v)).collect())
    }

    pub fn add(&mut self, a: usize, b: usize) -> usize {
        let v: Vec<T> = self.vals[a]
            .iter()
            .zip(&self.vals[b])
            .map(|(x, y)| *x + *y)
            .collect();
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: usize, b: usize) -> usize {
        let v: Vec<T> = self.vals[a]
            .iter()
            .zip(&self.vals[b])
            .map(|(x, y)| *x - *y)
            .collect();
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: usize, b: usize) -> usize {
        let v: Vec<T> = self.vals[a]
            .iter()
            .zip(&self.vals[b])
            .map(|(x, y)| *x * *y)
            .collect();
        self.push(Op::Mul(a, b), v)
    }

    pub fn scale(&mut self, a: usize, c: f64) -> usize {
        let v: Vec<T> = self.vals[a].iter().map(|x| x.scale(c)).collect();
        self.push(Op::Scale(a, c), v)
    }

    pub fn exp(&mut self, a: usize) -> usize {
        let v: Vec<T> = self.vals[a].iter().map(|x| x.exp()).collect();
        self.push(Op::Exp(a), v)
    }

    pub fn max_subtract(&mut self, a: usize) -> usize {
        let m = self.vals[a]
            .iter()
            .map(|x| x.primal())
            .fold(f64::NEG_INFINITY, f64::max);
        let mc = T::from_f64(m);
        let v: Vec<T> = self.vals[a].iter().map(|x| *x - mc).collect();
        self.push(Op::MaxSubtract(a), v)
    }

    pub fn sum(&mut self, a: usize) -> usize {
        let mut acc = T::ZERO;
        for x in &self.vals[a] {
            acc += *x;
        }
        self.push(Op::Sum(a), vec![acc])
    }

    pub fn mul_scalar(&mut self, a: usize, s: usize) -> usize {
        debug_assert_eq!(self.vals[s].len(), 1);
        let sv = self.vals[s][0];
        let v: Vec<T> = self.vals[a].iter().map(|x| *x * sv).collect();
        self.push(Op::MulScalar(a, s), v)
    }

    pub fn recip(&mut self, a: usize) -> usize {
        debug_assert_eq!(self.vals[a].len(), 1);
        let v = vec![self.vals[a][0].recip()];
        self.push(Op::Recip(a), v)
    }

    pub fn sq_diff_sum(&mut self, a: usize, b: usize) -> usize {
        debug_assert_eq!(self.vals[a].len(), self.vals[b].len());
        let mut acc = T::ZERO;
        for (x, y) in self.vals[a].iter().zip(&self.vals[b]) {
            let d = *x - *y;
            acc += d * d;
        }
        self.push(Op::SqDiffSum(a, b), vec![acc])
    }

    /// Temperature softmax built from primitives.
    pub fn softmax_t(&mut self, x: usize, t: f64) -> usize {
        let shifted = self.max_subtract(x);
        let scaled = self.scale(shifted, 1.0 / t);
        let e = self.exp(scaled);
        let z = self.sum(e);
        let rz = self.recip(z);
        self.mul_scalar(e, rz)
    }

    pub fn warp(&mut self, base: usize, thetas: usize, grid: GridShape) -> usize {
        let n = grid.cells();
        debug_assert_eq!(self.vals[base].len(), n);
        debug_assert_eq!(self.vals[thetas].len(), 6 * n);
        let mut out = vec![T::ZERO; n * n];
        for i in 0..n {
            warp_one::<T>(
                &self.vals[base],
                &self.vals[thetas][6 * i..6 * i + 6],
                grid,
                &mut out[i * n..(i + 1) * n],
            );
        }
        self.push(Op::Warp { base, thetas, grid }, out)
    }

    pub fn fuse_matvec(&mut self, target: usize, weights: usize, source: usize) -> usize {
        let n = self.vals[target].len();
        debug_assert_eq!(self.vals[source].len(), n);
        debug_assert_eq!(self.vals[weights].len(), n * n);
        let mut out = Vec::with_capacity(n);
        {
            let w = &self.vals[weights];
            let s = &self.vals[source];
            let t = &self.vals[target];
            for i in 0..n {
                let mut acc = T::ZERO;
                for (wj, sj) in w[i * n..(i + 1) * n].iter().zip(s) {
                    acc += *wj * *sj;
                }
                out.push(t[i] + acc);
            }
        }
        self.push(
            Op::FuseMatVec {
                target,
                weights,
                source,
            },
            out,
        )
    }

    /// Index of the first node whose value contains a non-finite entry.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.vals
            .iter()
            .position(|v| v.iter().any(|x| !x.is_finite()))
    }

    /// Reverse pass from a scalar node. Returns one adjoint buffer per node;
    /// leaf adjoints are the gradients.
    pub fn backward(&self, loss: usize) -> Vec<Vec<T>> {
        debug_assert_eq!(self.vals[loss].len(), 1);
        let mut adj: Vec<Vec<T>> = self.vals.iter().map(|v| vec![T::ZERO; v.len()]).collect();
        adj[loss][0] = T::ONE;
        for id in (0..self.ops.len()).rev() {
            if matches!(self.ops[id], Op::Leaf) {
                continue;
            }
            // Take this node's (final) adjoint; inputs always have smaller ids.
            let g = std::mem::take(&mut adj[id]);
            match &self.ops[id] {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    for (slot, gk) in adj[*a].iter_mut().zip(&g) {
                        *slot += *gk;
                    }
                    for (slot, gk) in adj[*b].iter_mut().zip(&g) {
                        *slot += *gk;
                    }
                }
                Op::Sub(a, b) => {
                    for (slot, gk) in adj[*a].iter_mut().zip(&g) {
                        *slot += *gk;
                    }
                    for (slot, gk) in adj[*b].iter_mut().zip(&g) {
                        *slot -= *gk;
                    }
                }
                Op::Mul(a, b) => {
                    for (k, gk) in g.iter().enumerate() {
                        let vb = self.vals[*b][k];
                        adj[*a][k] += *gk * vb;
                    }
                    for (k, gk) in g.iter().enumerate() {
                        let va = self.vals[*a][k];
                        adj[*b][k] += *gk * va;
                    }
                }
                Op::Scale(a, c) => {
                    for (slot, gk) in adj[*a].iter_mut().zip(&g) {
                        *slot += gk.scale(*c);
                    }
                }
                Op::Exp(a) => {
                    let out = &self.vals[id];
                    for (k, gk) in g.iter().enumerate() {
                        adj[*a][k] += *gk * out[k];
                    }
                }
                Op::MaxSubtract(a) => {
                    for (slot, gk) in adj[*a].iter_mut().zip(&g) {
                        *slot += *gk;
                    }
                }
                Op::Sum(a) => {
                    let g0 = g[0];
                    for slot in adj[*a].iter_mut() {
                        *slot += g0;
                    }
                }
                Op::MulScalar(a, s) => {
                    let sv = self.vals[*s][0];
                    for (k, gk) in g.iter().enumerate() {
                        adj[*a][k] += *gk * sv;
                    }
                    let va = &self.vals[*a];
                    let mut acc = T::ZERO;
                    for (k, gk) in g.iter().enumerate() {
                        acc += *gk * va[k];
                    }
                    adj[*s][0] += acc;
                }
                Op::Recip(a) => {
                    let out = self.vals[id][0];
                    adj[*a][0] -= g[0] * out * out;
                }
                Op::SqDiffSum(a, b) => {
                    let g0 = g[0];
                    let (va, vb) = (&self.vals[*a], &self.vals[*b]);
                    for k in 0..va.len() {
                        let two_d = (va[k] - vb[k]).scale(2.0);
                        adj[*a][k] += g0 * two_d;
                    }
                    for k in 0..va.len() {
                        let two_d = (va[k] - vb[k]).scale(2.0);
                        adj[*b][k] -= g0 * two_d;
                    }
                }
                Op::Warp { base, thetas, grid } => {
                    let n = grid.cells();
                    let mut d_base = std::mem::take(&mut adj[*base]);
                    let mut d_thetas = std::mem::take(&mut adj[*thetas]);
                    for i in 0..n {
                        warp_one_backward::<T>(
                            &self.vals[*base],
                            &self.vals[*thetas][6 * i..6 * i + 6],
                            *grid,
                            &g[i * n..(i + 1) * n],
                            &mut d_base,
                            &mut d_thetas[6 * i..6 * i + 6],
                        );
                    }
                    adj[*base] = d_base;
                    adj[*thetas] = d_thetas;
                }
                Op::FuseMatVec {
                    target,
                    weights,
                    source,
                } => {
                    let n = g.len();
                    for (slot, gk) in adj[*target].iter_mut().zip(&g) {
                        *slot += *gk;
                    }
                    {
                        let s = &self.vals[*source];
                        let dw = &mut adj[*weights];
                        for i in 0..n {
                            let gi = g[i];
                            for (slot, sj) in dw[i * n..(i + 1) * n].iter_mut().zip(s) {
                                *slot += gi * *sj;
                            }
                        }
                    }
                    {
                        let w = &self.vals[*weights];
                        let ds = &mut adj[*source];
                        for i in 0..n {
                            let gi = g[i];
                            for (slot, wj) in ds.iter_mut().zip(&w[i * n..(i + 1) * n]) {
                                *slot += gi * *wj;
                            }
                        }
                    }
                }
            }
            adj[id] = g;
        }
        adj
    }
}

#[inline]
fn half_spans(grid: GridShape) -> (f64, f64) {
    ((grid.w - 1) as f64 / 2.0, (grid.h - 1) as f64 / 2.0)
}

/// Forward bilinear warp of `base` by one 6-parameter block, generic scalar.
/// Mirrors `fusion::warp_into` over `f64`.
pub fn warp_one<T: Scalar>(base: &[T], theta: &[T], grid: GridShape, out: &mut [T]) {
    let (h, w) = (grid.h, grid.w);
    let (sx, sy) = half_spans(grid);
    let (a, b, tx, c_, d, ty) = (theta[0], theta[1], theta[2], theta[3], theta[4], theta[5]);
    for r in 0..h {
        let gy = r as f64 / sy - 1.0;
        for c in 0..w {
            let gx = c as f64 / sx - 1.0;
            let ix = (a.scale(gx) + b.scale(gy) + tx + T::ONE).scale(sx);
            let iy = (c_.scale(gx) + d.scale(gy) + ty + T::ONE).scale(sy);
            let x0f = ix.primal().floor();
            let y0f = iy.primal().floor();
            let fx = ix - T::from_f64(x0f);
            let fy = iy - T::from_f64(y0f);
            let (x0, y0) = (x0f as i64, y0f as i64);
            let mut acc = T::ZERO;
            for (dy, wy) in [(0i64, T::ONE - fy), (1, fy)] {
                let yy = y0 + dy;
                if yy < 0 || yy >= h as i64 {
                    continue;
                }
                for (dx, wx) in [(0i64, T::ONE - fx), (1, fx)] {
                    let xx = x0 + dx;
                    if xx < 0 || xx >= w as i64 {
                        continue;
                    }
                    acc += wy * wx * base[yy as usize * w + xx as usize];
                }
            }
            out[r * w + c] = acc;
        }
    }
}

/// Accumulate d(loss)/d(base) and d(loss)/d(theta) for one warped row.
fn warp_one_backward<T: Scalar>(
    base: &[T],
    theta: &[T],
    grid: GridShape,
    g_row: &[T],
    d_base: &mut [T],
    d_theta: &mut [T],
) {
    let (h, w) = (grid.h, grid.w);
    let (sx, sy) = half_spans(grid);
    let (a, b, tx, c_, d, ty) = (theta[0], theta[1], theta[2], theta[3], theta[4], theta[5]);
    let fetch = |x: i64, y: i64| -> T {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            T::ZERO
        } else {
            base[y as usize * w + x as usize]
        }
    };
    for r in 0..h {
        let gy = r as f64 / sy - 1.0;
        for c in 0..w {
            let g = g_row[r * w + c];
            let gx = c as f64 / sx - 1.0;
            let ix = (a.scale(gx) + b.scale(gy) + tx + T::ONE).scale(sx);
            let iy = (c_.scale(gx) + d.scale(gy) + ty + T::ONE).scale(sy);
            let x0f = ix.primal().floor();
            let y0f = iy.primal().floor();
            let fx = ix - T::from_f64(x0f);
            let fy = iy - T::from_f64(y0f);
            let (x0, y0) = (x0f as i64, y0f as i64);
            for (dy, wy) in [(0i64, T::ONE - fy), (1, fy)] {
                let yy = y0 + dy;
                if yy < 0 || yy >= h as i64 {
                    continue;
                }
                for (dx, wx) in [(0i64, T::ONE - fx), (1, fx)] {
                    let xx = x0 + dx;
                    if xx < 0 || xx >= w as i64 {
                        continue;
                    }
                    d_base[yy as usize * w + xx as usize] += g * wy * wx;
                }
            }
            let b00 = fetch(x0, y0);
            let b10 = fetch(x0 + 1, y0);
            let b01 = fetch(x0, y0 + 1);
            let b11 = fetch(x0 + 1, y0 + 1);
            // d(sample)/d(ix) and d(sample)/d(iy) within the bilinear cell.
            let dv_dix = (T::ONE - fy) * (b10 - b00) + fy * (b11 - b01);
            let dv_diy = (T::ONE - fx) * (b01 - b00) + fx * (b11 - b10);
            // ix = (a gx + b gy + tx + 1) sx, so d(ix)/d(a) = gx sx, etc.
            let gix = g * dv_dix;
            let giy = g * dv_diy;
            d_theta[0] += gix.scale(gx * sx);
            d_theta[1] += gix.scale(gy * sx);
            d_theta[2] += gix.scale(sx);
            d_theta[3] += giy.scale(gx * sy);
            d_theta[4] += giy.scale(gy * sy);
            d_theta[5] += giy.scale(sy);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::THETA_IDENTITY;
    use crate::rng::Stream;

    #[test]
    fn softmax_node_matches_heatmap_softmax() {
        let shape = GridShape::new(4, 4);
        let mut rng = Stream::new(2);
        let xs: Vec<f64> = (0..shape.cells()).map(|_| rng.normal()).collect();
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.leaf_f64(&xs);
        let sm = tape.softmax_t(x, 0.2);
        let grid = crate::heatmap::HeatmapGrid::from_vec(shape, xs);
        let oracle = crate::heatmap::softmax_temperature(&grid, 0.2).unwrap();
        for (a, b) in tape.value(sm).iter().zip(&oracle.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn warp_node_matches_fusion_forward() {
        let grid = GridShape::new(6, 6);
        let mut rng = Stream::new(3);
        let base: Vec<f64> = (0..grid.cells()).map(|_| rng.normal()).collect();
        let mut thetas = Vec::new();
        for _ in 0..grid.cells() {
            for (k, t) in THETA_IDENTITY.iter().enumerate() {
                let jitter = if k == 2 || k == 5 { 0.3 } else { 0.15 };
                thetas.push(t + jitter * rng.normal());
            }
        }
        let mut tape: Tape<f64> = Tape::new();
        let b = tape.leaf_f64(&base);
        let th = tape.leaf_f64(&thetas);
        let w = tape.warp(b, th, grid);
        for i in 0..grid.cells() {
            let mut expect = vec![0.0; grid.cells()];
            crate::fusion::warp_into(&base, grid, &thetas[6 * i..6 * i + 6], &mut expect);
            let got = &tape.value(w)[i * grid.cells()..(i + 1) * grid.cells()];
            for (a, b) in got.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    // Gradient of every op against central differences, through a composite
    // that touches add/scale/exp/softmax/warp/fuse.
    #[test]
    fn composite_gradient_matches_finite_differences() {
        let grid = GridShape::new(4, 4);
        let n = grid.cells();
        let mut rng = Stream::new(5);
        let base: Vec<f64> = (0..n).map(|_| 0.5 * rng.normal()).collect();
        let mut thetas = Vec::new();
        for _ in 0..n {
            for (k, t) in THETA_IDENTITY.iter().enumerate() {
                // Keep sampling points away from exact cell boundaries.
                let jitter = if k == 2 || k == 5 { 0.21 } else { 0.11 };
                thetas.push(t + jitter * rng.normal());
            }
        }
        let target: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let source: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let gt: Vec<f64> = (0..n).map(|_| rng.normal()).collect();

        let eval = |bv: &[f64], tv: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
            let mut tape: Tape<f64> = Tape::new();
            let b = tape.leaf_f64(bv);
            let th = tape.leaf_f64(tv);
            let tg = tape.leaf_f64(&target);
            let src = tape.leaf_f64(&source);
            let gtn = tape.leaf_f64(&gt);
            let w = tape.warp(b, th, grid);
            let fused = tape.fuse_matvec(tg, w, src);
            let sm = tape.softmax_t(fused, 0.5);
            let sq = tape.sq_diff_sum(sm, gtn);
            let loss = tape.scale(sq, 1.0 / n as f64);
            let adj = tape.backward(loss);
            (tape.value(loss)[0], adj[b].clone(), adj[th].clone())
        };

        let (_l0, d_base, d_theta) = eval(&base, &thetas);
        let eps = 1e-5;
        for k in 0..n {
            let mut bp = base.clone();
            bp[k] += eps;
            let mut bm = base.clone();
            bm[k] -= eps;
            let fd = (eval(&bp, &thetas).0 - eval(&bm, &thetas).0) / (2.0 * eps);
            let denom = d_base[k].abs().max(fd.abs()).max(1e-8);
            assert!(
                ((d_base[k] - fd) / denom).abs() < 1e-4,
                "base[{k}]: analytic {} fd {fd}",
                d_base[k]
            );
        }
        for k in 0..6 * n {
            let mut tp = thetas.clone();
            tp[k] += eps;
            let mut tm = thetas.clone();
            tm[k] -= eps;
            let fd = (eval(&base, &tp).0 - eval(&base, &tm).0) / (2.0 * eps);
            let denom = d_theta[k].abs().max(fd.abs()).max(1e-8);
            assert!(
                ((d_theta[k] - fd) / denom).abs() < 1e-4,
                "theta[{k}]: analytic {} fd {fd}",
                d_theta[k]
            );
        }
    }

    // Dual-number forward-over-reverse equals finite differences of the
    // f64 gradient along the tangent direction.
    #[test]
    fn dual_backward_gives_hessian_vector_product() {
        use super::super::dual::Dual;
        let grid = GridShape::new(3, 3);
        let n = grid.cells();
        let mut rng = Stream::new(7);
        let xs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let dir: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let gt: Vec<f64> = (0..n).map(|_| rng.normal()).collect();

        let grad_at = |p: &[f64]| -> Vec<f64> {
            let mut tape: Tape<f64> = Tape::new();
            let x = tape.leaf_f64(p);
            let gtn = tape.leaf_f64(&gt);
            let sm = tape.softmax_t(x, 0.7);
            let sq = tape.sq_diff_sum(sm, gtn);
            let loss = tape.scale(sq, 0.5);
            tape.backward(loss)[x].clone()
        };

        let mut tape: Tape<Dual> = Tape::new();
        let x = tape.leaf(
            xs.iter()
                .zip(&dir)
                .map(|(v, t)| Dual { v: *v, t: *t })
                .collect(),
        );
        let gtn = tape.leaf_f64(&gt);
        let sm = tape.softmax_t(x, 0.7);
        let sq = tape.sq_diff_sum(sm, gtn);
        let loss = tape.scale(sq, 0.5);
        let hvp: Vec<f64> = tape.backward(loss)[x].iter().map(|d| d.t).collect();

        let eps = 1e-6;
        let xp: Vec<f64> = xs.iter().zip(&dir).map(|(v, t)| v + eps * t).collect();
        let xm: Vec<f64> = xs.iter().zip(&dir).map(|(v, t)| v - eps * t).collect();
        let (gp, gm) = (grad_at(&xp), grad_at(&xm));
        for k in 0..n {
            let fd = (gp[k] - gm[k]) / (2.0 * eps);
            assert!(
                (hvp[k] - fd).abs() < 1e-6 * (1.0 + fd.abs()),
                "hvp[{k}] {} vs fd {fd}",
                hvp[k]
            );
        }
    }
}
