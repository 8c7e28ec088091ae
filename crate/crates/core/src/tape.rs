//! Minimal reverse-mode autodiff over dense `f64` matrices.
//!
//! Every node holds a matrix; scalars are `1×1`. Nodes created with
//! [`Tape::constant`] never receive gradients, which is how stop-gradient
//! is expressed.

use ndarray::{s, Array2, Axis};

use crate::types::Mat;

/// Probability floor inside every logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize, usize),
    /// `-(1/denom) Σ_i ln max(p[i, t_i], floor)` over rows with a target.
    Nll {
        probs: Var,
        targets: Vec<Option<usize>>,
        denom: f64,
    },
    /// `-(1/B) Σ_i ln max(q_i, floor)`, `q = p` for real, `1 - p` for fake.
    Binary {
        probs: Var,
        real: bool,
    },
    /// `(1/B) Σ_i Σ_j |a_ij - b_ij|`.
    L1(Var, Var),
}

struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients from one backward pass, indexed by [`Var`].
pub struct Grads(Vec<Option<Mat>>);

impl Grads {
    /// Gradient of the root w.r.t. `v`; zeros when `v` did not influence it.
    pub fn get(&self, v: Var, tape: &Tape) -> Mat {
        match &self.0[v.0] {
            Some(g) => g.clone(),
            None => Mat::zeros(tape.value(v).raw_dim()),
        }
    }
}

fn scalar(v: f64) -> Mat {
    Array2::from_elem((1, 1), v)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        let needs_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b) | Op::AddRow(a, b) | Op::Add(a, b) | Op::ConcatCols(a, b) | Op::L1(a, b) => self.needs(*a) || self.needs(*b),
            Op::Scale(a, _) | Op::Tanh(a) | Op::Sigmoid(a) | Op::SoftmaxRows(a) | Op::SliceCols(a, ..) => self.needs(*a),
            Op::Nll { probs, .. } | Op::Binary { probs, .. } => self.needs(*probs),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf that receives gradients.
    pub fn param(&mut self, value: Mat) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Re-enters `v`'s current value as a constant (stop-gradient).
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    /// `x + bias` with a `1×n` bias broadcast over rows.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let value = self.value(x) + self.value(bias);
        self.push(value, Op::AddRow(x, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a) * k;
        self.push(value, Op::Scale(a, k))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|x| x / sum);
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let value = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()]).expect("row counts agree");
        self.push(value, Op::ConcatCols(a, b))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(value, Op::SliceCols(a, start, end))
    }

    /// Negative log-likelihood of `targets` under row distributions `probs`,
    /// summed over rows with a target and divided by `denom`.
    pub fn nll(&mut self, probs: Var, targets: Vec<Option<usize>>, denom: f64) -> Var {
        let p = self.value(probs);
        assert_eq!(p.nrows(), targets.len(), "one target slot per row");
        let sum: f64 = targets
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|t| -p[[i, t]].max(PROB_FLOOR).ln()))
            .sum();
        let value = scalar(sum / denom);
        self.push(value, Op::Nll { probs, targets, denom })
    }

    /// Batch-mean binary log loss of a single-column probability.
    pub fn binary(&mut self, probs: Var, real: bool) -> Var {
        let p = self.value(probs);
        let n = p.nrows() as f64;
        let sum: f64 = p
            .column(0)
            .iter()
            .map(|&p| -(if real { p } else { 1.0 - p }).max(PROB_FLOOR).ln())
            .sum();
        self.push(scalar(sum / n), Op::Binary { probs, real })
    }

    /// Batch-mean of per-row Manhattan distances.
    pub fn l1(&mut self, a: Var, b: Var) -> Var {
        let n = self.value(a).nrows() as f64;
        let sum: f64 = (self.value(a) - self.value(b)).mapv(f64::abs).sum();
        self.push(scalar(sum / n), Op::L1(a, b))
    }

    /// Sum of `1×1` nodes.
    pub fn sum(&mut self, terms: &[Var]) -> Var {
        let mut it = terms.iter().copied();
        let first = it.next().expect("at least one term");
        it.fold(first, |acc, t| self.add(acc, t))
    }

    pub fn backward(&self, root: Var) -> Grads {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Mat::ones(self.value(root).raw_dim()));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[i] = Some(g);
        }
        Grads(grads)
    }

    fn accumulate(&self, grads: &mut [Option<Mat>], v: Var, g: Mat) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => *acc += &g,
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, op: &Op, out: &Mat, g: &Mat, grads: &mut [Option<Mat>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                self.accumulate(grads, *a, g.dot(&self.value(*b).t()));
                self.accumulate(grads, *b, self.value(*a).t().dot(g));
            }
            Op::AddRow(x, bias) => {
                self.accumulate(grads, *x, g.clone());
                self.accumulate(grads, *bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Scale(a, k) => self.accumulate(grads, *a, g * *k),
            Op::Tanh(a) => self.accumulate(grads, *a, g * &out.mapv(|y| 1.0 - y * y)),
            Op::Sigmoid(a) => self.accumulate(grads, *a, g * &out.mapv(|y| y * (1.0 - y))),
            Op::SoftmaxRows(a) => {
                let mut gi = Mat::zeros(out.raw_dim());
                for ((mut row, p), gr) in gi.rows_mut().into_iter().zip(out.rows()).zip(g.rows()) {
                    let dot = p.dot(&gr);
                    for j in 0..row.len() {
                        row[j] = p[j] * (gr[j] - dot);
                    }
                }
                self.accumulate(grads, *a, gi);
            }
            Op::ConcatCols(a, b) => {
                let split = self.value(*a).ncols();
                self.accumulate(grads, *a, g.slice(s![.., ..split]).to_owned());
                self.accumulate(grads, *b, g.slice(s![.., split..]).to_owned());
            }
            Op::SliceCols(a, start, end) => {
                let mut gi = Mat::zeros(self.value(*a).raw_dim());
                gi.slice_mut(s![.., *start..*end]).assign(g);
                self.accumulate(grads, *a, gi);
            }
            Op::Nll { probs, targets, denom } => {
                let p = self.value(*probs);
                let upstream = g[[0, 0]];
                let mut gi = Mat::zeros(p.raw_dim());
                for (i, t) in targets.iter().enumerate() {
                    if let Some(t) = *t {
                        let q = p[[i, t]];
                        if q > PROB_FLOOR {
                            gi[[i, t]] = -upstream / (denom * q);
                        }
                    }
                }
                self.accumulate(grads, *probs, gi);
            }
            Op::Binary { probs, real } => {
                let p = self.value(*probs);
                let n = p.nrows() as f64;
                let upstream = g[[0, 0]];
                let gi = p.mapv(|p| {
                    let q = if *real { p } else { 1.0 - p };
                    if q > PROB_FLOOR {
                        let d = -upstream / (n * q);
                        if *real {
                            d
                        } else {
                            -d
                        }
                    } else {
                        0.0
                    }
                });
                self.accumulate(grads, *probs, gi);
            }
            Op::L1(a, b) => {
                let n = self.value(*a).nrows() as f64;
                let upstream = g[[0, 0]];
                let sign = (self.value(*a) - self.value(*b)).mapv(|d| upstream * sign0(d) / n);
                self.accumulate(grads, *b, -&sign);
                self.accumulate(grads, *a, sign);
            }
        }
    }
}

/// Sign with `sign0(0) == 0`, the subgradient used for `|x|` at the kink.
fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Central differences on one leaf, evaluated by rebuilding the graph.
    fn numeric<F: Fn(&Mat) -> f64>(x: &Mat, f: F) -> Mat {
        let eps = 1e-6;
        let mut g = Mat::zeros(x.raw_dim());
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let mut p = x.clone();
            p[[r, c]] += eps;
            let up = f(&p);
            p[[r, c]] -= 2.0 * eps;
            let down = f(&p);
            g[[r, c]] = (up - down) / (2.0 * eps);
        }
        g
    }

    fn assert_close(a: &Mat, b: &Mat, tol: f64) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())), "{a} vs {b}");
        }
    }

    #[test]
    fn dense_softmax_nll_gradient() {
        let w0 = array![[0.3, -0.2, 0.5], [0.1, 0.4, -0.6]];
        let x = array![[0.5, -1.0], [2.0, 0.25]];
        let build = |w: &Mat| {
            let mut t = Tape::new();
            let wv = t.param(w.clone());
            let xv = t.constant(x.clone());
            let b = t.constant(array![[0.1, 0.0, -0.1]]);
            let h = t.matmul(xv, wv);
            let h = t.add_row(h, b);
            let h = t.tanh(h);
            let p = t.softmax_rows(h);
            let loss = t.nll(p, vec![Some(2), Some(0)], 2.0);
            (t, wv, loss)
        };
        let (t, wv, loss) = build(&w0);
        let analytic = t.backward(loss).get(wv, &t);
        let num = numeric(&w0, |w| {
            let (t, _, l) = build(w);
            t.scalar(l)
        });
        assert_close(&analytic, &num, 1e-6);
    }

    #[test]
    fn sigmoid_binary_concat_slice_l1_gradient() {
        let a0 = array![[0.2, -0.7, 1.1], [0.9, 0.3, -0.4]];
        let build = |a: &Mat| {
            let mut t = Tape::new();
            let av = t.param(a.clone());
            let k = t.constant(array![[1.0, 0.0], [0.0, 1.0]]);
            let cat = t.concat_cols(av, k);
            let head = t.slice_cols(cat, 0, 1);
            let p = t.sigmoid(head);
            let real = t.binary(p, true);
            let fake = t.binary(p, false);
            let rest = t.slice_cols(cat, 1, 4);
            let target = t.constant(Mat::from_elem((2, 3), 0.05));
            let l1 = t.l1(rest, target);
            let l1 = t.scale(l1, 0.5);
            let total = t.sum(&[real, fake, l1]);
            (t, av, total)
        };
        let (t, av, total) = build(&a0);
        let analytic = t.backward(total).get(av, &t);
        let num = numeric(&a0, |a| {
            let (t, _, l) = build(a);
            t.scalar(l)
        });
        assert_close(&analytic, &num, 1e-6);
    }

    #[test]
    fn constants_and_detached_nodes_get_no_gradient() {
        let mut t = Tape::new();
        let w = t.param(array![[2.0]]);
        let y = t.scale(w, 3.0);
        let d = t.detach(y);
        let z = t.add(d, w);
        let grads = t.backward(z);
        assert_eq!(grads.get(w, &t)[[0, 0]], 1.0);
    }
}
