//! Eagerly evaluated computation graph with reverse-mode differentiation.
//!
//! Values are computed when a node is created; `backward` then walks nodes
//! in reverse creation order, which is a valid topological order because
//! every node only references earlier nodes. Constants are skipped during
//! the sweep, so marking parameters as constants (for example discriminator
//! weights during a generator update) cuts gradient flow exactly there.

use alloc::vec;
use alloc::vec::Vec;

use super::kernels;
use super::scalar::Real;
use super::tensor::{Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

enum OpKind<S: Real> {
    Leaf,
    Constant,
    Conv2d { x: NodeId, w: NodeId, b: NodeId, stride: usize, pad: usize },
    LeakyRelu { x: NodeId, slope: S },
    Upsample { x: NodeId, factor: usize },
    SoftmaxGroups { x: NodeId },
    CrossEntropy { p: NodeId, labels: Vec<u8>, weights: Vec<S> },
    LsganGen { scores: NodeId },
    LsganDisc { real: NodeId, fake: NodeId },
    Add { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: S },
    Sum { x: NodeId },
    Reshape { x: NodeId },
}

struct Node<S: Real> {
    op: OpKind<S>,
    value: Tensor<S>,
    needs_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Clone, Debug)]
pub struct Gradients<S: Real> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Real> Gradients<S> {
    /// Gradient of the root with respect to this node, if any flowed here.
    pub fn get(&self, id: NodeId) -> Option<&Tensor<S>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }
}

/// The computation graph.
pub struct Tape<S: Real> {
    nodes: Vec<Node<S>>,
}

impl<S: Real> Default for Tape<S> {
    fn default() -> Self {
        Tape::new()
    }
}

impl<S: Real> Tape<S> {
    pub fn new() -> Tape<S> {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: OpKind<S>, value: Tensor<S>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { op, value, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Differentiable input (a parameter).
    pub fn leaf(&mut self, value: Tensor<S>) -> NodeId {
        self.push(OpKind::Leaf, value, true)
    }

    /// Non-differentiable input; gradient flow stops here.
    pub fn constant(&mut self, value: Tensor<S>) -> NodeId {
        self.push(OpKind::Constant, value, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    /// Value of a single-element node.
    pub fn value_scalar(&self, id: NodeId) -> S {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value.data()[0]
    }

    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId, TensorError> {
        let value =
            kernels::conv2d_forward(self.value(x), self.value(w), self.value(b), stride, pad)?;
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(OpKind::Conv2d { x, w, b, stride, pad }, value, needs))
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: S) -> NodeId {
        let value = kernels::leaky_relu_forward(self.value(x), slope);
        let needs = self.needs(x);
        self.push(OpKind::LeakyRelu { x, slope }, value, needs)
    }

    pub fn upsample_nearest(&mut self, x: NodeId, factor: usize) -> NodeId {
        let value = kernels::upsample_forward(self.value(x), factor);
        let needs = self.needs(x);
        self.push(OpKind::Upsample { x, factor }, value, needs)
    }

    pub fn softmax_groups(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let value = kernels::softmax_groups_forward(self.value(x))?;
        let needs = self.needs(x);
        Ok(self.push(OpKind::SoftmaxGroups { x }, value, needs))
    }

    /// Weighted cross entropy of probabilities `[G,K,H,W]` against labels
    /// `[G,H,W]`; yields a scalar node.
    pub fn cross_entropy(
        &mut self,
        p: NodeId,
        labels: Vec<u8>,
        weights: Vec<S>,
    ) -> Result<NodeId, TensorError> {
        let loss = kernels::weighted_ce_forward(self.value(p), &labels, &weights)?;
        let value = Tensor::from_vec(&[], vec![loss]).unwrap();
        let needs = self.needs(p);
        Ok(self.push(OpKind::CrossEntropy { p, labels, weights }, value, needs))
    }

    pub fn lsgan_generator(&mut self, scores: NodeId) -> NodeId {
        let loss = kernels::lsgan_gen_forward(self.value(scores));
        let value = Tensor::from_vec(&[], vec![loss]).unwrap();
        let needs = self.needs(scores);
        self.push(OpKind::LsganGen { scores }, value, needs)
    }

    pub fn lsgan_discriminator(&mut self, real: NodeId, fake: NodeId) -> NodeId {
        let loss = kernels::lsgan_disc_forward(self.value(real), self.value(fake));
        let value = Tensor::from_vec(&[], vec![loss]).unwrap();
        let needs = self.needs(real) || self.needs(fake);
        self.push(OpKind::LsganDisc { real, fake }, value, needs)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.dims() != tb.dims() {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                detail: alloc::format!("{:?} vs {:?}", ta.dims(), tb.dims()),
            });
        }
        let mut value = ta.clone();
        for (v, w) in value.data_mut().iter_mut().zip(tb.data()) {
            *v += *w;
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(OpKind::Add { a, b }, value, needs))
    }

    pub fn scale(&mut self, x: NodeId, c: S) -> NodeId {
        let mut value = self.value(x).clone();
        for v in value.data_mut() {
            *v *= c;
        }
        let needs = self.needs(x);
        self.push(OpKind::Scale { x, c }, value, needs)
    }

    /// Sum of all elements; yields a scalar node.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let mut acc = S::ZERO;
        for &v in self.value(x).data() {
            acc += v;
        }
        let value = Tensor::from_vec(&[], vec![acc]).unwrap();
        let needs = self.needs(x);
        self.push(OpKind::Sum { x }, value, needs)
    }

    pub fn reshape(&mut self, x: NodeId, dims: &[usize]) -> Result<NodeId, TensorError> {
        let value = self.value(x).reshaped(dims)?;
        let needs = self.needs(x);
        Ok(self.push(OpKind::Reshape { x }, value, needs))
    }

    /// Reverse-mode sweep from a scalar root. Returns a gradient per node
    /// that participates; constants and untouched branches yield `None`.
    pub fn backward(&self, root: NodeId) -> Result<Gradients<S>, TensorError> {
        let root_val = &self.nodes[root.0].value;
        if root_val.len() != 1 {
            return Err(TensorError::NonScalarRoot { dims: root_val.dims().to_vec() });
        }
        let mut grads: Vec<Option<Tensor<S>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::full(root_val.dims(), S::ONE));

        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                OpKind::Leaf | OpKind::Constant => {
                    grads[i] = Some(dy);
                    continue;
                }
                OpKind::Conv2d { x, w, b, stride, pad } => {
                    let (dx, dw, db) = kernels::conv2d_backward(
                        self.value(*x),
                        self.value(*w),
                        &dy,
                        *stride,
                        *pad,
                    );
                    if self.needs(*x) {
                        accumulate(&mut grads[x.0], dx);
                    }
                    if self.needs(*w) {
                        accumulate(&mut grads[w.0], dw);
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads[b.0], db);
                    }
                }
                OpKind::LeakyRelu { x, slope } => {
                    let dx = kernels::leaky_relu_backward(self.value(*x), &dy, *slope);
                    accumulate(&mut grads[x.0], dx);
                }
                OpKind::Upsample { x, factor } => {
                    let dx = kernels::upsample_backward(&dy, *factor, self.value(*x).dims());
                    accumulate(&mut grads[x.0], dx);
                }
                OpKind::SoftmaxGroups { x } => {
                    let dx = kernels::softmax_groups_backward(&self.nodes[i].value, &dy);
                    accumulate(&mut grads[x.0], dx);
                }
                OpKind::CrossEntropy { p, labels, weights } => {
                    let dp = kernels::weighted_ce_backward(
                        self.value(*p),
                        labels,
                        weights,
                        dy.data()[0],
                    );
                    accumulate(&mut grads[p.0], dp);
                }
                OpKind::LsganGen { scores } => {
                    let ds = kernels::lsgan_gen_backward(self.value(*scores), dy.data()[0]);
                    accumulate(&mut grads[scores.0], ds);
                }
                OpKind::LsganDisc { real, fake } => {
                    let (dr, df) = kernels::lsgan_disc_backward(
                        self.value(*real),
                        self.value(*fake),
                        dy.data()[0],
                    );
                    if self.needs(*real) {
                        accumulate(&mut grads[real.0], dr);
                    }
                    if self.needs(*fake) {
                        accumulate(&mut grads[fake.0], df);
                    }
                }
                OpKind::Add { a, b } => {
                    if self.needs(*a) {
                        accumulate(&mut grads[a.0], dy.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads[b.0], dy.clone());
                    }
                }
                OpKind::Scale { x, c } => {
                    let mut dx = dy.clone();
                    for v in dx.data_mut() {
                        *v *= *c;
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                OpKind::Sum { x } => {
                    let dx = Tensor::full(self.value(*x).dims(), dy.data()[0]);
                    accumulate(&mut grads[x.0], dx);
                }
                OpKind::Reshape { x } => {
                    let dx = dy.reshaped(self.value(*x).dims()).unwrap();
                    accumulate(&mut grads[x.0], dx);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate<S: Real>(slot: &mut Option<Tensor<S>>, delta: Tensor<S>) {
    match slot {
        Some(acc) => {
            for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                *a += *d;
            }
        }
        None => *slot = Some(delta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_tensor(rng: &mut SplitMix64, dims: &[usize]) -> Tensor<f64> {
        let n = dims.iter().product();
        let data = (0..n).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        Tensor::from_vec(dims, data).unwrap()
    }

    #[test]
    fn sum_of_a_leaf_has_all_ones_gradient() {
        let mut t = Tape::<f64>::new();
        let p = t.leaf(Tensor::full(&[2, 3], 0.5));
        let loss = t.sum(p);
        let grads = t.backward(loss).unwrap();
        assert_eq!(grads.get(p).unwrap(), &Tensor::full(&[2, 3], 1.0));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::<f64>::new();
        let c = t.constant(Tensor::full(&[4], 1.0));
        let p = t.leaf(Tensor::full(&[4], 2.0));
        let s = t.add(c, p).unwrap();
        let loss = t.sum(s);
        let grads = t.backward(loss).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(p).unwrap(), &Tensor::full(&[4], 1.0));
    }

    #[test]
    fn gradient_stops_at_pure_constant_subgraphs() {
        let mut t = Tape::<f64>::new();
        let c = t.constant(Tensor::full(&[2], 3.0));
        let scaled = t.scale(c, 2.0);
        let loss = t.sum(scaled);
        let grads = t.backward(loss).unwrap();
        assert_eq!(t.value_scalar(loss), 12.0);
        assert!(grads.get(c).is_none());
        assert!(grads.get(scaled).is_none());
    }

    #[test]
    fn add_and_scale_compose_linearly() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf(Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap());
        let b = t.leaf(Tensor::from_vec(&[2], vec![10.0, 20.0]).unwrap());
        let s = t.add(a, b).unwrap();
        let scaled = t.scale(s, 3.0);
        let loss = t.sum(scaled);
        assert_eq!(t.value_scalar(loss), 99.0);
        let grads = t.backward(loss).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[3.0, 3.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn fan_out_gradients_accumulate() {
        // loss = sum(x) + sum(2x) so dloss/dx = 3 everywhere.
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor::full(&[3], 1.0));
        let s1 = t.sum(x);
        let doubled = t.scale(x, 2.0);
        let s2 = t.sum(doubled);
        let loss = t.add(s1, s2).unwrap();
        let grads = t.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[3.0, 3.0, 3.0]);
    }

    #[test]
    fn reshape_routes_gradients_back_to_original_shape() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor::full(&[2, 2], 1.0));
        let flat = t.reshape(x, &[4]).unwrap();
        let loss = t.sum(flat);
        let grads = t.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().dims(), &[2, 2]);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(Tensor::full(&[2, 2], 1.0));
        assert_eq!(
            t.backward(x).unwrap_err(),
            TensorError::NonScalarRoot { dims: vec![2, 2] }
        );
    }

    #[test]
    fn backward_is_repeatable_on_the_same_tape() {
        let mut rng = SplitMix64::new(5);
        let mut t = Tape::<f64>::new();
        let x = t.constant(random_tensor(&mut rng, &[2, 6, 6]));
        let w = t.leaf(random_tensor(&mut rng, &[3, 2, 3, 3]));
        let b = t.leaf(random_tensor(&mut rng, &[3]));
        let y = t.conv2d(x, w, b, 1, 1).unwrap();
        let a = t.leaky_relu(y, 0.1);
        let loss = t.sum(a);
        let g1 = t.backward(loss).unwrap();
        let g2 = t.backward(loss).unwrap();
        assert_eq!(g1.get(w), g2.get(w));
        assert_eq!(g1.get(b), g2.get(b));
        assert!(g1.get(x).is_none());
    }

    #[test]
    fn network_chain_produces_gradients_with_parameter_shapes() {
        let mut rng = SplitMix64::new(11);
        let mut t = Tape::<f64>::new();
        let img = t.constant(random_tensor(&mut rng, &[2, 8, 8]));
        let w1 = t.leaf(random_tensor(&mut rng, &[4, 2, 3, 3]));
        let b1 = t.leaf(random_tensor(&mut rng, &[4]));
        let h = t.conv2d(img, w1, b1, 2, 1).unwrap();
        let h = t.leaky_relu(h, 0.1);
        let h = t.upsample_nearest(h, 2);
        let w2 = t.leaf(random_tensor(&mut rng, &[6, 4, 3, 3]));
        let b2 = t.leaf(random_tensor(&mut rng, &[6]));
        let logits = t.conv2d(h, w2, b2, 1, 1).unwrap();
        let grouped = t.reshape(logits, &[2, 3, 8, 8]).unwrap();
        let probs = t.softmax_groups(grouped).unwrap();
        let labels: Vec<u8> = (0..2 * 64).map(|_| rng.below(3) as u8).collect();
        let loss = t.cross_entropy(probs, labels, vec![0.2, 1.0, 1.0]).unwrap();

        assert!(t.value_scalar(loss).is_finite());
        let grads = t.backward(loss).unwrap();
        assert_eq!(grads.get(w1).unwrap().dims(), &[4, 2, 3, 3]);
        assert_eq!(grads.get(b1).unwrap().dims(), &[4]);
        assert_eq!(grads.get(w2).unwrap().dims(), &[6, 4, 3, 3]);
        assert!(grads.get(w1).unwrap().data().iter().any(|&g| g != 0.0));
    }
}
