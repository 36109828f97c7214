use std::cell::RefCell;

use super::matrix::{mm, sigmoid_scalar, Matrix};

/// Recording tape for reverse-mode differentiation.
///
/// Operations append nodes during the forward pass; `Var::backward` replays
/// them in reverse and accumulates gradients additively, so a node used in
/// several places receives the sum of its downstream contributions. A tape is
/// confined to one thread; parallelism happens across independent tapes.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

struct Node {
    op: Op,
    value: Matrix,
}

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MatMul(usize, usize),
    AddRow(usize, usize),
    Transpose(usize),
    Sigmoid(usize),
    Relu(usize),
    Softplus(usize),
    Log(usize),
    Abs(usize),
    Scale(usize, f64),
    DivScalar(usize, f64),
    AddScalar(usize, f64),
    Powf(usize, f64),
    Clamp(usize, f64, f64),
    Sum(usize),
    Mean(usize),
    RowSum(usize),
    StraightThrough(usize),
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    /// Record an input node. Whether it acts as a trainable parameter or a
    /// constant is decided by the caller: gradients exist for every node and
    /// optimizers read only the ones they care about.
    pub fn leaf(&self, value: Matrix) -> Var<'_> {
        self.push(Op::Leaf, value)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, op: Op, value: Matrix) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op, value });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn with_value<R>(&self, id: usize, f: impl FnOnce(&Matrix) -> R) -> R {
        f(&self.nodes.borrow()[id].value)
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

/// Handle to a tape node.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Matrix {
        self.tape.with_value(self.id, |v| v.clone())
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.with_value(self.id, |v| v.shape())
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self) -> f64 {
        self.tape.with_value(self.id, |v| {
            assert_eq!(v.shape(), (1, 1), "scalar() on a non-scalar node");
            v.data()[0]
        })
    }

    pub fn add(&self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, "add", Op::Add, |a, b| {
            a.zip_unchecked(b, |x, y| x + y)
        })
    }

    pub fn sub(&self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, "sub", Op::Sub, |a, b| {
            a.zip_unchecked(b, |x, y| x - y)
        })
    }

    /// Entry-wise product.
    pub fn mul(&self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, "mul", Op::Mul, |a, b| {
            a.zip_unchecked(b, |x, y| x * y)
        })
    }

    pub fn matmul(&self, rhs: Var<'t>) -> Var<'t> {
        let value = self.tape.with_value(self.id, |a| {
            self.tape.with_value(rhs.id, |b| {
                assert_eq!(
                    a.cols(),
                    b.rows(),
                    "matmul shape mismatch: {:?} x {:?}",
                    a.shape(),
                    b.shape()
                );
                mm(a, b)
            })
        });
        self.tape.push(Op::MatMul(self.id, rhs.id), value)
    }

    /// Broadcast-add a 1xC row to every row of an NxC matrix.
    pub fn add_row(&self, row: Var<'t>) -> Var<'t> {
        let value = self.tape.with_value(self.id, |a| {
            self.tape.with_value(row.id, |r| {
                assert_eq!(r.rows(), 1, "add_row expects a 1xC row");
                assert_eq!(a.cols(), r.cols(), "add_row width mismatch");
                let mut out = a.clone();
                for i in 0..out.rows() {
                    for j in 0..out.cols() {
                        out[(i, j)] += r[(0, j)];
                    }
                }
                out
            })
        });
        self.tape.push(Op::AddRow(self.id, row.id), value)
    }

    pub fn t(&self) -> Var<'t> {
        let value = self.tape.with_value(self.id, |a| a.transpose());
        self.tape.push(Op::Transpose(self.id), value)
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(Op::Sigmoid, |a| a.map(sigmoid_scalar))
    }

    pub fn relu(&self) -> Var<'t> {
        self.unary(Op::Relu, |a| a.map(|x| if x > 0.0 { x } else { 0.0 }))
    }

    /// ln(1 + e^x), evaluated stably; the building block for log-probability
    /// terms that must stay finite at saturated logits.
    pub fn softplus(&self) -> Var<'t> {
        self.unary(Op::Softplus, |a| a.map(softplus_scalar))
    }

    pub fn log(&self) -> Var<'t> {
        self.unary(Op::Log, |a| a.map(f64::ln))
    }

    pub fn abs(&self) -> Var<'t> {
        self.unary(Op::Abs, |a| a.map(f64::abs))
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        let value = self.tape.with_value(self.id, |a| a.scale(c));
        self.tape.push(Op::Scale(self.id, c), value)
    }

    pub fn div_scalar(&self, c: f64) -> Var<'t> {
        let value = self.tape.with_value(self.id, |a| a.map(|x| x / c));
        self.tape.push(Op::DivScalar(self.id, c), value)
    }

    pub fn add_scalar(&self, c: f64) -> Var<'t> {
        let value = self.tape.with_value(self.id, |a| a.map(|x| x + c));
        self.tape.push(Op::AddScalar(self.id, c), value)
    }

    pub fn powf(&self, p: f64) -> Var<'t> {
        let value = self.tape.with_value(self.id, |a| a.map(|x| x.powf(p)));
        self.tape.push(Op::Powf(self.id, p), value)
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Var<'t> {
        let value = self
            .tape
            .with_value(self.id, |a| a.map(|x| x.clamp(lo, hi)));
        self.tape.push(Op::Clamp(self.id, lo, hi), value)
    }

    /// Reduce to a 1x1 sum.
    pub fn sum(&self) -> Var<'t> {
        let value = self
            .tape
            .with_value(self.id, |a| Matrix::filled(1, 1, a.sum()));
        self.tape.push(Op::Sum(self.id), value)
    }

    /// Reduce to a 1x1 mean over all entries.
    pub fn mean(&self) -> Var<'t> {
        let value = self
            .tape
            .with_value(self.id, |a| Matrix::filled(1, 1, a.mean()));
        self.tape.push(Op::Mean(self.id), value)
    }

    /// NxC -> Nx1 row sums.
    pub fn row_sum(&self) -> Var<'t> {
        let value = self.tape.with_value(self.id, |a| {
            let mut out = Matrix::zeros(a.rows(), 1);
            for i in 0..a.rows() {
                out[(i, 0)] = a.row(i).iter().sum();
            }
            out
        });
        self.tape.push(Op::RowSum(self.id), value)
    }

    /// Forward value is `forward` (e.g. sampled bits); the backward pass
    /// treats the op as the identity on this node's parent, which is the
    /// straight-through surrogate for a hard threshold.
    pub fn straight_through(&self, forward: Matrix) -> Var<'t> {
        let shape = self.shape();
        assert_eq!(shape, forward.shape(), "straight_through shape mismatch");
        self.tape.push(Op::StraightThrough(self.id), forward)
    }

    /// Mean of the squared distance between rows of `self` and `rhs`,
    /// i.e. mean over rows of the squared Euclidean row difference.
    pub fn mean_row_sq_dist(&self, rhs: Var<'t>) -> Var<'t> {
        let d = self.sub(rhs);
        d.mul(d).row_sum().mean()
    }

    fn unary(&self, op: impl FnOnce(usize) -> Op, f: impl FnOnce(&Matrix) -> Matrix) -> Var<'t> {
        let value = self.tape.with_value(self.id, f);
        self.tape.push(op(self.id), value)
    }

    fn binary(
        &self,
        rhs: Var<'t>,
        name: &str,
        op: impl FnOnce(usize, usize) -> Op,
        f: impl FnOnce(&Matrix, &Matrix) -> Matrix,
    ) -> Var<'t> {
        debug_assert!(std::ptr::eq(self.tape, rhs.tape), "vars from different tapes");
        let value = self.tape.with_value(self.id, |a| {
            self.tape.with_value(rhs.id, |b| {
                assert_eq!(
                    a.shape(),
                    b.shape(),
                    "{name} shape mismatch: {:?} vs {:?}",
                    a.shape(),
                    b.shape()
                );
                f(a, b)
            })
        });
        self.tape.push(op(self.id, rhs.id), value)
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self) -> Gradients {
        let nodes = self.tape.nodes.borrow();
        assert_eq!(
            nodes[self.id].value.shape(),
            (1, 1),
            "backward() must start from a scalar node"
        );
        let mut grads: Vec<Option<Matrix>> = vec![None; self.id + 1];
        grads[self.id] = Some(Matrix::ones(1, 1));

        for id in (0..=self.id).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &nodes[id];
            match node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, a, g.clone());
                    accumulate(&mut grads, b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, b, g.scale(-1.0));
                    accumulate(&mut grads, a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_unchecked(&nodes[b].value, |x, y| x * y);
                    let gb = g.zip_unchecked(&nodes[a].value, |x, y| x * y);
                    accumulate(&mut grads, a, ga);
                    accumulate(&mut grads, b, gb);
                }
                Op::MatMul(a, b) => {
                    let ga = mm(&g, &nodes[b].value.transpose());
                    let gb = mm(&nodes[a].value.transpose(), &g);
                    accumulate(&mut grads, a, ga);
                    accumulate(&mut grads, b, gb);
                }
                Op::AddRow(a, r) => {
                    let mut gr = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for j in 0..g.cols() {
                            gr[(0, j)] += g[(i, j)];
                        }
                    }
                    accumulate(&mut grads, a, g);
                    accumulate(&mut grads, r, gr);
                }
                Op::Transpose(a) => accumulate(&mut grads, a, g.transpose()),
                Op::Sigmoid(a) => {
                    let ga = g.zip_unchecked(&node.value, |gv, y| gv * y * (1.0 - y));
                    accumulate(&mut grads, a, ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip_unchecked(&nodes[a].value, |gv, x| {
                        if x > 0.0 {
                            gv
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, a, ga);
                }
                Op::Softplus(a) => {
                    let ga = g.zip_unchecked(&nodes[a].value, |gv, x| gv * sigmoid_scalar(x));
                    accumulate(&mut grads, a, ga);
                }
                Op::Log(a) => {
                    let ga = g.zip_unchecked(&nodes[a].value, |gv, x| gv / x);
                    accumulate(&mut grads, a, ga);
                }
                Op::Abs(a) => {
                    let ga = g.zip_unchecked(&nodes[a].value, |gv, x| gv * sign(x));
                    accumulate(&mut grads, a, ga);
                }
                Op::Scale(a, c) => accumulate(&mut grads, a, g.scale(c)),
                Op::DivScalar(a, c) => accumulate(&mut grads, a, g.map(|x| x / c)),
                Op::AddScalar(a, _) => accumulate(&mut grads, a, g),
                Op::Powf(a, p) => {
                    let ga = g.zip_unchecked(&nodes[a].value, |gv, x| gv * p * x.powf(p - 1.0));
                    accumulate(&mut grads, a, ga);
                }
                Op::Clamp(a, lo, hi) => {
                    let ga = g.zip_unchecked(&nodes[a].value, |gv, x| {
                        if x >= lo && x <= hi {
                            gv
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, a, ga);
                }
                Op::Sum(a) => {
                    let shape = nodes[a].value.shape();
                    accumulate(&mut grads, a, Matrix::filled(shape.0, shape.1, g.data()[0]));
                }
                Op::Mean(a) => {
                    let shape = nodes[a].value.shape();
                    let n = (shape.0 * shape.1) as f64;
                    accumulate(
                        &mut grads,
                        a,
                        Matrix::filled(shape.0, shape.1, g.data()[0] / n),
                    );
                }
                Op::RowSum(a) => {
                    let shape = nodes[a].value.shape();
                    let mut ga = Matrix::zeros(shape.0, shape.1);
                    for i in 0..shape.0 {
                        for j in 0..shape.1 {
                            ga[(i, j)] = g[(i, 0)];
                        }
                    }
                    accumulate(&mut grads, a, ga);
                }
                Op::StraightThrough(a) => accumulate(&mut grads, a, g),
            }
        }
        Gradients { grads }
    }
}

impl<'t> std::ops::Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        Var::add(&self, rhs)
    }
}

impl<'t> std::ops::Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        Var::sub(&self, rhs)
    }
}

impl<'t> std::ops::Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        Var::mul(&self, rhs)
    }
}

/// Gradients of one backward pass, indexed by node.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn wrt(&self, var: Var<'_>) -> Option<&Matrix> {
        self.grads.get(var.id()).and_then(|g| g.as_ref())
    }

    /// Gradient for `var`, or zeros when the node does not influence the
    /// output (e.g. a classifier with its loss terms switched off).
    pub fn take(&self, var: Var<'_>) -> Matrix {
        match self.wrt(var) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = var.shape();
                Matrix::zeros(r, c)
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], id: usize, delta: Matrix) {
    match &mut grads[id] {
        Some(g) => {
            *g = g.zip_unchecked(&delta, |x, y| x + y);
        }
        slot @ None => *slot = Some(delta),
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn softplus_scalar(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Matrix {
    /// Entry-wise zip without shape re-validation; tape-internal.
    pub(crate) fn zip_unchecked(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        debug_assert_eq!(self.shape(), other.shape());
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Matrix::from_raw(self.rows(), self.cols(), data)
    }
}
