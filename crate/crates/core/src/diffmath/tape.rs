//! A reverse-mode tape over dense row-major matrices.
//!
//! Every value on the tape is an `Array2<f64>`; scalars are `1×1` and vectors
//! are single rows. Nodes are appended in evaluation order, so a node's parents
//! always precede it and the backward sweep is a single reverse pass.

use std::sync::Arc;

use ndarray::{s, Array2, Axis};

use super::rotation;
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Param,
    Constant,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    MatMul(Var, Var),
    SparseMatMul(Arc<SparseMatrix>, Var),
    Transpose(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    Norm(Var),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    Reshape(Var),
    HStack(Vec<Var>),
    VStack(Vec<Var>),
    Rodrigues(Var),
    SkinApply(Var, Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Param => "param",
            Op::Constant => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::MatMul(..) => "matmul",
            Op::SparseMatMul(..) => "sparse_matmul",
            Op::Transpose(..) => "transpose",
            Op::Relu(..) => "relu",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Square(..) => "square",
            Op::Sum(..) => "sum",
            Op::Norm(..) => "norm",
            Op::SliceCols(..) => "slice_cols",
            Op::SliceRows(..) => "slice_rows",
            Op::Reshape(..) => "reshape",
            Op::HStack(..) => "hstack",
            Op::VStack(..) => "vstack",
            Op::Rodrigues(..) => "rodrigues",
            Op::SkinApply(..) => "skin_apply",
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Array2<f64>,
    tracked: bool,
}

/// Gradients of one output with respect to every tracked node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Array2<f64>> {
        self.grads[var.0].as_ref()
    }

    /// Gradient for `var`, zeros when the output does not depend on it.
    pub fn wrt(&self, var: Var) -> Array2<f64> {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => Array2::zeros(self.shapes[var.0]),
        }
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn dims(a: &Array2<f64>) -> String {
    format!("{}x{}", a.nrows(), a.ncols())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`, so a loop can keep
    /// its constants on the tape and rebuild only the per-iteration graph.
    /// Any [`Var`] at or past `len` becomes invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    fn push(&mut self, op: Op, value: Array2<f64>, parents: &[Var]) -> Var {
        let tracked = parents.iter().any(|p| self.nodes[p.0].tracked);
        self.nodes.push(Node { op, value, tracked });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable input.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.nodes.push(Node {
            op: Op::Param,
            value,
            tracked: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param_row(&mut self, values: &[f64]) -> Var {
        self.param(row(values))
    }

    /// An input that receives no gradient.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.nodes.push(Node {
            op: Op::Constant,
            value,
            tracked: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.dim(), y.dim(), "add: {} vs {}", dims(x), dims(y));
        let out = x + y;
        self.push(Op::Add(a, b), out, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.dim(), y.dim(), "sub: {} vs {}", dims(x), dims(y));
        let out = x - y;
        self.push(Op::Sub(a, b), out, &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.dim(), y.dim(), "mul: {} vs {}", dims(x), dims(y));
        let out = x * y;
        self.push(Op::Mul(a, b), out, &[a, b])
    }

    /// Adds the `1×m` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert!(
            y.nrows() == 1 && y.ncols() == x.ncols(),
            "add_row: {} vs {}",
            dims(x),
            dims(y)
        );
        let out = x + y;
        self.push(Op::AddRow(a, b), out, &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) * c;
        self.push(Op::Scale(a, c), out, &[a])
    }

    /// Adds a constant to every element.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) + c;
        self.push(Op::Offset(a), out, &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.ncols(), y.nrows(), "matmul: {} vs {}", dims(x), dims(y));
        let out = x.dot(y);
        self.push(Op::MatMul(a, b), out, &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).t().to_owned();
        self.push(Op::Transpose(a), out, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x.max(0.0));
        self.push(Op::Relu(a), out, &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::exp);
        self.push(Op::Exp(a), out, &[a])
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::ln);
        self.push(Op::Log(a), out, &[a])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x * x);
        self.push(Op::Square(a), out, &[a])
    }

    /// Sum of all elements, as a `1×1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(Op::Sum(a), out, &[a])
    }

    /// Frobenius norm, as a `1×1` node.
    pub fn norm(&mut self, a: Var) -> Var {
        let n = self.value(a).iter().map(|x| x * x).sum::<f64>().sqrt();
        self.push(Op::Norm(a), Array2::from_elem((1, 1), n), &[a])
    }

    /// `sum((a - b)^2)`.
    pub fn squared_distance(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let sq = self.square(d);
        self.sum(sq)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let x = self.value(a);
        assert!(
            start <= end && end <= x.ncols(),
            "slice_cols: {start}..{end} of {}",
            dims(x)
        );
        let out = x.slice(s![.., start..end]).to_owned();
        self.push(Op::SliceCols(a, start, end), out, &[a])
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let x = self.value(a);
        assert!(
            start <= end && end <= x.nrows(),
            "slice_rows: {start}..{end} of {}",
            dims(x)
        );
        let out = x.slice(s![start..end, ..]).to_owned();
        self.push(Op::SliceRows(a, start, end), out, &[a])
    }

    /// `m · b` for a constant sparse `m`.
    pub fn sparse_matmul(&mut self, m: &Arc<SparseMatrix>, b: Var) -> Var {
        let out = m.dot(self.value(b));
        self.push(Op::SparseMatMul(Arc::clone(m), b), out, &[b])
    }

    /// Row-major reinterpretation as `rows×cols`.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.len(), rows * cols, "reshape: {} to {rows}x{cols}", dims(x));
        let data: Vec<f64> = x.iter().copied().collect();
        let out = Array2::from_shape_vec((rows, cols), data).expect("reshape");
        self.push(Op::Reshape(a), out, &[a])
    }

    pub fn hstack(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("hstack: row counts differ");
        self.push(Op::HStack(parts.to_vec()), out, parts)
    }

    pub fn vstack(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).expect("vstack: column counts differ");
        self.push(Op::VStack(parts.to_vec()), out, parts)
    }

    /// Rotation matrix (`3×3`) of an axis-angle row (`1×3`).
    pub fn rodrigues(&mut self, a: Var) -> Var {
        let r = axis_angle(self.value(a));
        let m = rotation::rodrigues(r);
        let out = Array2::from_shape_fn((3, 3), |(i, j)| m[i][j]);
        self.push(Op::Rodrigues(a), out, &[a])
    }

    /// Applies a per-row affine transform. Row `i` of `transforms` (`N×12`)
    /// holds a row-major `3×3` matrix followed by a translation; row `i` of
    /// `points` (`N×3`) is mapped through it.
    pub fn skin_apply(&mut self, transforms: Var, points: Var) -> Var {
        let (t, x) = (self.value(transforms), self.value(points));
        assert!(
            t.ncols() == 12 && x.ncols() == 3 && t.nrows() == x.nrows(),
            "skin_apply: {} vs {}",
            dims(t),
            dims(x)
        );
        let mut out = Array2::zeros((x.nrows(), 3));
        for ((tr, xr), mut o) in t.rows().into_iter().zip(x.rows()).zip(out.rows_mut()) {
            for a in 0..3 {
                o[a] = tr[3 * a] * xr[0] + tr[3 * a + 1] * xr[1] + tr[3 * a + 2] * xr[2] + tr[9 + a];
            }
        }
        self.push(Op::SkinApply(transforms, points), out, &[transforms, points])
    }

    fn check_finite(&self, upto: usize) -> Result<()> {
        for (i, node) in self.nodes[..=upto].iter().enumerate() {
            if node.value.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    node: i,
                    op: node.op.name(),
                });
            }
        }
        Ok(())
    }

    /// Reverse sweep from `output`, seeded with ones (so a non-scalar output
    /// is differentiated as the sum of its elements).
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        self.check_finite(output.0)?;
        let n = output.0 + 1;
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Array2::ones(self.nodes[output.0].value.dim()));

        for idx in (0..n).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    node: idx,
                    op: node.op.name(),
                });
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let shapes = self.nodes.iter().map(|n| n.value.dim()).collect();
        // Only leaf gradients and the output are meaningful to callers; keep all.
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Array2<f64>>], v: Var, delta: Array2<f64>) {
        if !self.nodes[v.0].tracked {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => *g += &delta,
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, op: &Op, out: &Array2<f64>, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        match op {
            Op::Param | Op::Constant => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, -g);
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, g * y);
                self.accumulate(grads, *b, g * x);
            }
            Op::AddRow(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g * *c),
            Op::Offset(a) => self.accumulate(grads, *a, g.clone()),
            Op::MatMul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].tracked {
                    self.accumulate(grads, *a, g.dot(&y.t()));
                }
                if self.nodes[b.0].tracked {
                    self.accumulate(grads, *b, x.t().dot(g));
                }
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.t().to_owned()),
            Op::Relu(a) => {
                let x = self.value(*a);
                let mut d = g.clone();
                d.zip_mut_with(x, |d, &x| {
                    if x <= 0.0 {
                        *d = 0.0
                    }
                });
                self.accumulate(grads, *a, d);
            }
            Op::Exp(a) => self.accumulate(grads, *a, g * out),
            Op::Log(a) => self.accumulate(grads, *a, g / self.value(*a)),
            Op::Square(a) => self.accumulate(grads, *a, g * self.value(*a) * 2.0),
            Op::Sum(a) => {
                let shape = self.value(*a).dim();
                self.accumulate(grads, *a, Array2::from_elem(shape, g[[0, 0]]));
            }
            Op::Norm(a) => {
                let n = out[[0, 0]];
                let x = self.value(*a);
                let d = if n > 0.0 {
                    x * (g[[0, 0]] / n)
                } else {
                    Array2::zeros(x.dim())
                };
                self.accumulate(grads, *a, d);
            }
            Op::SliceCols(a, start, end) => {
                let mut d = Array2::zeros(self.value(*a).dim());
                d.slice_mut(s![.., *start..*end]).assign(g);
                self.accumulate(grads, *a, d);
            }
            Op::SliceRows(a, start, end) => {
                let mut d = Array2::zeros(self.value(*a).dim());
                d.slice_mut(s![*start..*end, ..]).assign(g);
                self.accumulate(grads, *a, d);
            }
            Op::SparseMatMul(m, b) => self.accumulate(grads, *b, m.t_dot(g)),
            Op::Reshape(a) => {
                let shape = self.value(*a).dim();
                let data: Vec<f64> = g.iter().copied().collect();
                self.accumulate(grads, *a, Array2::from_shape_vec(shape, data).expect("reshape"));
            }
            Op::HStack(parts) => {
                let mut col = 0;
                for p in parts {
                    let w = self.value(*p).ncols();
                    self.accumulate(grads, *p, g.slice(s![.., col..col + w]).to_owned());
                    col += w;
                }
            }
            Op::VStack(parts) => {
                let mut row = 0;
                for p in parts {
                    let h = self.value(*p).nrows();
                    self.accumulate(grads, *p, g.slice(s![row..row + h, ..]).to_owned());
                    row += h;
                }
            }
            Op::Rodrigues(a) => {
                let x = self.value(*a);
                let jac = rotation::rodrigues_jacobian(axis_angle(x));
                let mut d = [0.0; 3];
                for (i, di) in d.iter_mut().enumerate() {
                    for p in 0..3 {
                        for q in 0..3 {
                            *di += g[[p, q]] * jac[i][p][q];
                        }
                    }
                }
                let d = Array2::from_shape_vec(x.dim(), d.to_vec()).expect("rodrigues grad");
                self.accumulate(grads, *a, d);
            }
            Op::SkinApply(t, x) => {
                let (tv, xv) = (self.value(*t), self.value(*x));
                if self.nodes[t.0].tracked {
                    let mut dt = Array2::zeros(tv.dim());
                    for ((mut d, xr), gr) in dt.rows_mut().into_iter().zip(xv.rows()).zip(g.rows()) {
                        for a in 0..3 {
                            for b in 0..3 {
                                d[3 * a + b] = gr[a] * xr[b];
                            }
                            d[9 + a] = gr[a];
                        }
                    }
                    self.accumulate(grads, *t, dt);
                }
                if self.nodes[x.0].tracked {
                    let mut dx = Array2::zeros(xv.dim());
                    for ((mut d, tr), gr) in dx.rows_mut().into_iter().zip(tv.rows()).zip(g.rows()) {
                        for b in 0..3 {
                            d[b] = gr[0] * tr[b] + gr[1] * tr[3 + b] + gr[2] * tr[6 + b];
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
            }
        }
    }
}

fn axis_angle(x: &Array2<f64>) -> [f64; 3] {
    assert_eq!(x.len(), 3, "rodrigues: expected 3 elements, found {}", dims(x));
    let mut it = x.iter();
    [*it.next().unwrap(), *it.next().unwrap(), *it.next().unwrap()]
}

/// A `1×n` matrix holding `values`.
pub fn row(values: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, values.len()), values.to_vec()).expect("row")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_at_three() {
        let mut t = Tape::new();
        let x = t.param(row(&[3.0]));
        let y = t.mul(x, x);
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(x)[[0, 0]], 6.0);
    }

    #[test]
    fn product_plus_square() {
        let mut t = Tape::new();
        let x = t.param(row(&[2.0]));
        let y = t.param(row(&[5.0]));
        let xy = t.mul(x, y);
        let yy = t.square(y);
        let f = t.add(xy, yy);
        let g = t.backward(f).unwrap();
        assert_eq!(g.wrt(x)[[0, 0]], 5.0);
        assert_eq!(g.wrt(y)[[0, 0]], 12.0);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(row(&[1.0, 2.0]));
        let p = t.param(row(&[3.0, 4.0]));
        let m = t.mul(c, p);
        let s = t.sum(m);
        let g = t.backward(s).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.wrt(p), row(&[1.0, 2.0]));
    }

    #[test]
    fn log_of_zero_names_the_node() {
        let mut t = Tape::new();
        let x = t.param(row(&[0.0]));
        let _ = t.scale(x, 2.0);
        let l = t.log(x);
        let s = t.sum(l);
        match t.backward(s) {
            Err(Error::NonFinite { node, op }) => {
                assert_eq!(node, l.index());
                assert_eq!(op, "log");
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn independent_subgraphs_backprop_separately() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a0: Array2<f64> = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
        let b0: Array2<f64> = Array2::from_shape_fn((4, 2), |_| rng.random_range(-1.0..1.0));

        let build_a = |t: &mut Tape, a: Var| {
            let e = t.exp(a);
            let s = t.square(e);
            t.sum(s)
        };
        let build_b = |t: &mut Tape, b: Var| {
            let r = t.relu(b);
            t.norm(r)
        };

        let mut t = Tape::new();
        let a = t.param(a0.clone());
        let b = t.param(b0.clone());
        let fa = build_a(&mut t, a);
        let fb = build_b(&mut t, b);
        let f = t.add(fa, fb);
        let joint = t.backward(f).unwrap();

        let mut ta = Tape::new();
        let a1 = ta.param(a0);
        let fa1 = build_a(&mut ta, a1);
        let ga = ta.backward(fa1).unwrap();
        let mut tb = Tape::new();
        let b1 = tb.param(b0);
        let fb1 = build_b(&mut tb, b1);
        let gb = tb.backward(fb1).unwrap();

        assert_eq!(joint.wrt(a), ga.wrt(a1));
        assert_eq!(joint.wrt(b), gb.wrt(b1));
    }
}
