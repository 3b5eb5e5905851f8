//! Reverse-mode automatic differentiation over dense scalar/vector/matrix
//! values.
//!
//! A [`Tape`] records one forward pass as an arena of nodes in creation
//! order, which is automatically a topological order: every node is created
//! strictly after its parents. [`Tape::backward`] walks the arena in reverse
//! and pushes vector-Jacobian products through the recorded closures.
//!
//! Values drawn from an RNG enter as constants ([`Tape::constant`]) and
//! therefore receive no gradient. For the kinks of `abs` and `relu` the
//! subgradient of minimum norm is used, i.e. zero at the kink itself.

use crate::error::{Error, Result};
use crate::tensor::{sigmoid, Shape, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

type Vjp = Box<dyn Fn(&Tensor) -> Tensor>;

struct Node {
    data: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
    /// (parent index, local vector-Jacobian product). Only parents that
    /// require gradients are recorded.
    parents: Vec<(usize, Vjp)>,
}

/// Arena of one forward pass. Confined to a single training run; parallelism
/// happens at the seed level with one tape per seed.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record a differentiable input (network weight, bias, ...).
    pub fn leaf(&mut self, data: Tensor) -> Var {
        self.push(data, true, Vec::new())
    }

    /// Record a non-differentiable input (observed data, noise draws, ...).
    pub fn constant(&mut self, data: Tensor) -> Var {
        self.push(data, false, Vec::new())
    }

    pub fn scalar_const(&mut self, x: f64) -> Var {
        self.constant(Tensor::scalar(x))
    }

    pub fn data(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].data
    }

    /// Accumulated gradient, if any backward pass has reached this value.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Clear every accumulated gradient on the tape.
    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, data: Tensor, requires_grad: bool, parents: Vec<(usize, Vjp)>) -> Var {
        self.nodes.push(Node {
            data,
            grad: None,
            requires_grad,
            parents,
        });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, a: Var, data: Tensor, vjp: impl Fn(&Tensor) -> Tensor + 'static) -> Var {
        let req = self.nodes[a.0].requires_grad;
        let parents: Vec<(usize, Vjp)> = if req {
            vec![(a.0, Box::new(vjp) as Vjp)]
        } else {
            Vec::new()
        };
        self.push(data, req, parents)
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        data: Tensor,
        vjp_a: impl Fn(&Tensor) -> Tensor + 'static,
        vjp_b: impl Fn(&Tensor) -> Tensor + 'static,
    ) -> Var {
        let mut parents: Vec<(usize, Vjp)> = Vec::new();
        if self.nodes[a.0].requires_grad {
            parents.push((a.0, Box::new(vjp_a)));
        }
        if self.nodes[b.0].requires_grad {
            parents.push((b.0, Box::new(vjp_b)));
        }
        let req = !parents.is_empty();
        self.push(data, req, parents)
    }

    /// Check elementwise conformability: identical shapes, or one side scalar.
    fn elementwise_shapes(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.nodes[a.0].data.shape(), self.nodes[b.0].data.shape());
        if sa == sb || sa == Shape::Scalar || sb == Shape::Scalar {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                op,
                lhs: sa,
                rhs: sb,
            })
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise_shapes("add", a, b)?;
        let (ta, tb) = (&self.nodes[a.0].data, &self.nodes[b.0].data);
        let data = broadcast_zip(ta, tb, |x, y| x + y);
        let (sa, sb) = (ta.shape(), tb.shape());
        Ok(self.binary(
            a,
            b,
            data,
            move |g| reduce_to(g, sa),
            move |g| reduce_to(g, sb),
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise_shapes("sub", a, b)?;
        let (ta, tb) = (&self.nodes[a.0].data, &self.nodes[b.0].data);
        let data = broadcast_zip(ta, tb, |x, y| x - y);
        let (sa, sb) = (ta.shape(), tb.shape());
        Ok(self.binary(
            a,
            b,
            data,
            move |g| reduce_to(g, sa),
            move |g| reduce_to(&g.scale(-1.0), sb),
        ))
    }

    /// Elementwise (Hadamard) product, scalar broadcasting allowed.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise_shapes("mul", a, b)?;
        let ta = self.nodes[a.0].data.clone();
        let tb = self.nodes[b.0].data.clone();
        let data = broadcast_zip(&ta, &tb, |x, y| x * y);
        let (sa, sb) = (ta.shape(), tb.shape());
        let tb2 = tb.clone();
        let ta2 = ta.clone();
        Ok(self.binary(
            a,
            b,
            data,
            move |g| reduce_to(&broadcast_zip(g, &tb2, |gi, y| gi * y), sa),
            move |g| reduce_to(&broadcast_zip(g, &ta2, |gi, x| gi * x), sb),
        ))
    }

    /// Elementwise division, scalar broadcasting allowed.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise_shapes("div", a, b)?;
        let ta = self.nodes[a.0].data.clone();
        let tb = self.nodes[b.0].data.clone();
        let data = broadcast_zip(&ta, &tb, |x, y| x / y);
        let (sa, sb) = (ta.shape(), tb.shape());
        let tb2 = tb.clone();
        let out = data.clone();
        let tb3 = tb.clone();
        Ok(self.binary(
            a,
            b,
            data,
            move |g| reduce_to(&broadcast_zip(g, &tb2, |gi, y| gi / y), sa),
            // d(a/b)/db = -(a/b)/b
            move |g| {
                let q = broadcast_zip(g, &out, |gi, o| gi * o);
                reduce_to(&broadcast_zip(&q, &tb3, |x, y| -x / y), sb)
            },
        ))
    }

    /// Matrix-vector product.
    pub fn matvec(&mut self, m: Var, v: Var) -> Result<Var> {
        let (sm, sv) = (self.nodes[m.0].data.shape(), self.nodes[v.0].data.shape());
        match (sm, sv) {
            (Shape::Matrix { cols, .. }, Shape::Vector(n)) if cols == n => {}
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "matvec",
                    lhs: sm,
                    rhs: sv,
                })
            }
        }
        let tm = self.nodes[m.0].data.clone();
        let tv = self.nodes[v.0].data.clone();
        let data = tm.matvec(&tv);
        let tv2 = tv.clone();
        let tm2 = tm.clone();
        Ok(self.binary(
            m,
            v,
            data,
            move |g| Tensor::outer(g, &tv2),
            move |g| tm2.matvec_t(g),
        ))
    }

    pub fn transpose(&mut self, m: Var) -> Result<Var> {
        let sm = self.nodes[m.0].data.shape();
        if !matches!(sm, Shape::Matrix { .. }) {
            return Err(Error::BadShape {
                op: "transpose",
                shape: sm,
            });
        }
        let data = self.nodes[m.0].data.transpose();
        Ok(self.unary(m, data, |g| g.transpose()))
    }

    /// Elementwise power `base^a` with a scalar (possibly learnable)
    /// exponent. Defined only for strictly positive bases; inputs are
    /// rescaled upstream to guarantee positivity.
    pub fn pow(&mut self, base: Var, exponent: Var) -> Result<Var> {
        let se = self.nodes[exponent.0].data.shape();
        if se != Shape::Scalar {
            return Err(Error::BadShape {
                op: "pow exponent",
                shape: se,
            });
        }
        let tb = self.nodes[base.0].data.clone();
        let a = self.nodes[exponent.0].data.item();
        let data = tb.powf_checked(a)?;
        let out = data.clone();
        let out2 = data.clone();
        let tb2 = tb.clone();
        let ln_base = tb.map(f64::ln);
        Ok(self.binary(
            base,
            exponent,
            data,
            // d/d(base) = a * base^(a-1)
            move |g| g.zip(&out, |gi, o| gi * a * o).zip(&tb2, |x, b| x / b),
            // d/da = Σ g ⊙ base^a ⊙ ln(base)
            move |g| {
                let s = g
                    .zip(&out2, |gi, o| gi * o)
                    .zip(&ln_base, |x, l| x * l)
                    .sum();
                Tensor::scalar(s)
            },
        ))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let data = self.nodes[a.0].data.map(f64::exp);
        let out = data.clone();
        self.unary(a, data, move |g| g.zip(&out, |gi, o| gi * o))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let src = &self.nodes[a.0].data;
        let shape = src.shape();
        let data = Tensor::scalar(src.sum());
        self.unary(a, data, move |g| {
            let mut t = Tensor::zeros(shape);
            let gi = g.item();
            for x in t.data_mut() {
                *x = gi;
            }
            t
        })
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let src = &self.nodes[a.0].data;
        let shape = src.shape();
        let n = src.len() as f64;
        let data = Tensor::scalar(src.sum() / n);
        self.unary(a, data, move |g| {
            let mut t = Tensor::zeros(shape);
            let gi = g.item() / n;
            for x in t.data_mut() {
                *x = gi;
            }
            t
        })
    }

    /// Clamp-at-zero. Gradient at exactly zero is zero (minimum-norm
    /// subgradient).
    pub fn relu(&mut self, a: Var) -> Var {
        let src = self.nodes[a.0].data.clone();
        let data = src.map(|x| x.max(0.0));
        self.unary(a, data, move |g| {
            g.zip(&src, |gi, x| if x > 0.0 { gi } else { 0.0 })
        })
    }

    /// Absolute value. Gradient at exactly zero is zero (minimum-norm
    /// subgradient).
    pub fn abs(&mut self, a: Var) -> Var {
        let src = self.nodes[a.0].data.clone();
        let data = src.map(f64::abs);
        self.unary(a, data, move |g| {
            g.zip(&src, |gi, x| {
                if x > 0.0 {
                    gi
                } else if x < 0.0 {
                    -gi
                } else {
                    0.0
                }
            })
        })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let data = self.nodes[a.0].data.map(sigmoid);
        let out = data.clone();
        self.unary(a, data, move |g| g.zip(&out, |gi, o| gi * o * (1.0 - o)))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let data = self.nodes[a.0].data.map(f64::tanh);
        let out = data.clone();
        self.unary(a, data, move |g| g.zip(&out, |gi, o| gi * (1.0 - o * o)))
    }

    /// Clamp to `[lo, hi]`. Gradient passes strictly inside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let src = self.nodes[a.0].data.clone();
        let data = src.map(|x| x.clamp(lo, hi));
        self.unary(a, data, move |g| {
            g.zip(&src, |gi, x| if x > lo && x < hi { gi } else { 0.0 })
        })
    }

    /// Multiplication by a plain constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let data = self.nodes[a.0].data.scale(c);
        self.unary(a, data, move |g| g.scale(c))
    }

    /// Extract one component of a vector as a scalar.
    pub fn component(&mut self, v: Var, index: usize) -> Result<Var> {
        let sv = self.nodes[v.0].data.shape();
        let Shape::Vector(n) = sv else {
            return Err(Error::BadShape {
                op: "component",
                shape: sv,
            });
        };
        if index >= n {
            return Err(Error::InvalidConfig(format!(
                "component index {index} out of bounds for {sv}"
            )));
        }
        let data = Tensor::scalar(self.nodes[v.0].data.data()[index]);
        Ok(self.unary(v, data, move |g| {
            let mut t = Tensor::zeros(Shape::Vector(n));
            t.data_mut()[index] = g.item();
            t
        }))
    }

    /// Assemble scalar values into a vector.
    pub fn stack(&mut self, components: &[Var]) -> Result<Var> {
        let mut data = Vec::with_capacity(components.len());
        for &c in components {
            let shape = self.nodes[c.0].data.shape();
            if shape != Shape::Scalar {
                return Err(Error::BadShape { op: "stack", shape });
            }
            data.push(self.nodes[c.0].data.item());
        }
        let mut parents: Vec<(usize, Vjp)> = Vec::new();
        for (i, &c) in components.iter().enumerate() {
            if self.nodes[c.0].requires_grad {
                parents.push((
                    c.0,
                    Box::new(move |g: &Tensor| Tensor::scalar(g.data()[i])) as Vjp,
                ));
            }
        }
        let req = !parents.is_empty();
        Ok(self.push(Tensor::vector(data), req, parents))
    }

    /// Propagate d(root)/d(ancestor) to every ancestor that requires a
    /// gradient. Gradients accumulate additively across calls; the caller
    /// owns zeroing.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_shape = self.nodes[root.0].data.shape();
        if root_shape != Shape::Scalar {
            return Err(Error::NonScalarRoot { shape: root_shape });
        }
        // Fresh adjoint buffer per call so repeated backward passes
        // accumulate linearly instead of compounding.
        let mut adjoint: Vec<Option<Tensor>> = (0..=root.0).map(|_| None).collect();
        adjoint[root.0] = Some(Tensor::scalar(1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = adjoint[i].take() else { continue };
            for (parent, vjp) in &self.nodes[i].parents {
                let contribution = vjp(&g);
                match &mut adjoint[*parent] {
                    Some(acc) => acc.add_assign(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            }
            if self.nodes[i].requires_grad {
                match &mut self.nodes[i].grad {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }
}

/// Elementwise combine with scalar broadcasting on either side.
fn broadcast_zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    match (a.shape(), b.shape()) {
        (sa, sb) if sa == sb => a.zip(b, f),
        (Shape::Scalar, _) => {
            let x = a.item();
            b.map(|y| f(x, y))
        }
        (_, Shape::Scalar) => {
            let y = b.item();
            a.map(|x| f(x, y))
        }
        (sa, sb) => panic!("broadcast_zip on {sa} vs {sb}"),
    }
}

/// Reduce an upstream gradient back to the shape of a (possibly broadcast)
/// operand: a scalar operand collects the sum of all contributions.
fn reduce_to(g: &Tensor, target: Shape) -> Tensor {
    if g.shape() == target {
        g.clone()
    } else {
        debug_assert_eq!(target, Shape::Scalar);
        Tensor::scalar(g.sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_examples() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![-1.5, 2.0]));
        let y = t.abs(x);
        assert_eq!(t.data(y).data(), &[1.5, 2.0]);

        let z = t.constant(Tensor::scalar(0.0));
        let s = t.sigmoid(z);
        assert_eq!(t.data(s).item(), 0.5);

        let a = t.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let b = t.constant(Tensor::vector(vec![4.0, 5.0, 6.0]));
        let h = t.mul(a, b).unwrap();
        assert_eq!(t.data(h).data(), &[4.0, 10.0, 18.0]);
    }

    #[test]
    fn power_rule() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(3.0));
        let j = t.mul(x, x).unwrap();
        t.backward(j).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), 6.0);
    }

    #[test]
    fn abs_subgradients() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(-2.0));
        let j = t.abs(x);
        t.backward(j).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), -1.0);

        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(0.0));
        let j = t.abs(x);
        t.backward(j).unwrap();
        assert_eq!(
            t.grad(x).unwrap().item(),
            0.0,
            "minimum-norm subgradient at the kink"
        );
    }

    #[test]
    fn relu_gradient_at_zero_is_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(0.0));
        let j = t.relu(x);
        t.backward(j).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), 0.0);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(t.backward(x), Err(Error::NonScalarRoot { .. })));
    }

    #[test]
    fn shape_mismatch_is_rejected_with_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = t.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let err = t.add(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("vector[2]") && msg.contains("vector[3]"),
            "{msg}"
        );
    }

    #[test]
    fn repeated_backward_accumulates_and_zeroing_resets() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(3.0));
        let j = t.mul(x, x).unwrap();
        t.backward(j).unwrap();
        t.backward(j).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), 12.0);

        t.zero_grads();
        assert!(t.grad(x).is_none());
        t.backward(j).unwrap();
        assert_eq!(
            t.grad(x).unwrap().item(),
            6.0,
            "same gradient as a single call"
        );
    }

    #[test]
    fn zero_grads_on_untouched_tape_is_a_noop() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(1.0));
        t.zero_grads();
        assert!(t.grad(x).is_none());
    }

    #[test]
    fn constants_collect_no_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(2.0));
        let noise = t.constant(Tensor::scalar(0.7));
        let y = t.mul(x, noise).unwrap();
        let j = t.mul(y, y).unwrap();
        t.backward(j).unwrap();
        assert!(
            t.grad(noise).is_none(),
            "random draws are constants for differentiation"
        );
        assert!((t.grad(x).unwrap().item() - 2.0 * 0.7 * 0.7 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn shared_subexpression_accumulates_through_both_paths() {
        // j = (x + x) * x = 2x^2, dj/dx = 4x
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(1.5));
        let s = t.add(x, x).unwrap();
        let j = t.mul(s, x).unwrap();
        t.backward(j).unwrap();
        assert!((t.grad(x).unwrap().item() - 6.0).abs() < 1e-15);
    }
}
