use ndarray::{s, Array1, Array2, ArrayView1, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::{LayerParams, Params, WrgnnModel};
use crate::compgraph::{ComputationGraph, Relation, RelationEdges};
use crate::error::{Error, Result};

/// Softmax over one node's neighbor logits.
pub fn neighbor_softmax(logits: &[f64]) -> Vec<f64> {
    if logits.is_empty() {
        return Vec::new();
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|x| x.max(0.0))
}

fn relu_mask(pre: &Array2<f64>, grad: &mut Array2<f64>) {
    Zip::from(grad).and(pre).for_each(|g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
}

/// Raw attention scores `a_src . z_u + a_dst . z_v` and the softmaxed
/// coefficients, both indexed like the relation's edge list.
fn relation_attention(
    z: &Array2<f64>,
    a: &Array1<f64>,
    edges: &RelationEdges,
    slope: f64,
) -> (Vec<f64>, Vec<f64>) {
    let d = z.ncols();
    let src = z.dot(&a.slice(s![..d]));
    let dst = z.dot(&a.slice(s![d..]));
    let offsets = edges.offsets();
    let targets = edges.targets();
    let mut raw = vec![0.0; targets.len()];
    let mut alpha = vec![0.0; targets.len()];
    for u in 0..offsets.len() - 1 {
        let range = offsets[u]..offsets[u + 1];
        if range.is_empty() {
            continue;
        }
        let logits: Vec<f64> = range
            .clone()
            .map(|e| {
                raw[e] = src[u] + dst[targets[e]];
                leaky(raw[e], slope)
            })
            .collect();
        for (e, p) in range.zip(neighbor_softmax(&logits)) {
            alpha[e] = p;
        }
    }
    (raw, alpha)
}

pub(crate) struct LayerCache {
    input: Array2<f64>,
    z: Vec<Array2<f64>>,
    raw: Vec<Vec<f64>>,
    alpha: Vec<Vec<f64>>,
    m: Array2<f64>,
    pre: Array2<f64>,
    norms: Array1<f64>,
    normalized: Array2<f64>,
}

pub(crate) struct ForwardPass {
    layers: Vec<LayerCache>,
    head_input: Array2<f64>,
    head_pre: Array2<f64>,
    head_act: Array2<f64>,
    pub(crate) logits: Array2<f64>,
}

/// Per-layer outputs, attention coefficients and predictions of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Normalized hidden states after each layer.
    pub hidden: Vec<Array2<f64>>,
    /// `attention[k][r][e]` for layer `k`, relation `r`, edge index `e`; empty without attention.
    pub attention: Vec<Vec<Vec<f64>>>,
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
}

pub(crate) fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|l| (l - max).exp());
        let total = row.sum();
        row /= total;
    }
    p
}

fn log_softmax_at(row: ArrayView1<f64>, y: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    row[y] - lse
}

/// Mean cross-entropy over `nodes`.
pub(crate) fn cross_entropy(logits: &Array2<f64>, labels: &[Option<usize>], nodes: &[usize]) -> f64 {
    let total: f64 = nodes
        .iter()
        .map(|&u| -log_softmax_at(logits.row(u), labels[u].expect("masked nodes are labeled")))
        .sum();
    total / nodes.len() as f64
}

impl WrgnnModel {
    fn check_inputs(&self, c: &ComputationGraph, x: &Array2<f64>) -> Result<()> {
        if c.num_relations() != self.config.num_relations {
            return Err(Error::DimensionMismatch {
                expected: self.config.num_relations,
                got: c.num_relations(),
            });
        }
        if x.nrows() != c.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: c.num_nodes(),
                got: x.nrows(),
            });
        }
        if x.ncols() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got: x.ncols(),
            });
        }
        Ok(())
    }

    fn layer_forward(&self, layer: &LayerParams, c: &ComputationGraph, h: Array2<f64>) -> LayerCache {
        let n = h.nrows();
        let mut m = Array2::zeros((n, layer.d_out()));
        let mut zs = Vec::with_capacity(c.num_relations());
        let mut raws = Vec::with_capacity(c.num_relations());
        let mut alphas = Vec::with_capacity(c.num_relations());
        for (r, edges) in c.relation_edges().enumerate() {
            let z = h.dot(&layer.w_rel[r]);
            let (raw, alpha) = match layer.att_index(r) {
                Some(i) if !edges.is_empty() => {
                    relation_attention(&z, &layer.att[i], edges, self.config.leaky_slope)
                }
                _ => (Vec::new(), Vec::new()),
            };
            let offsets = edges.offsets();
            for u in 0..n {
                let mut row = m.row_mut(u);
                for e in offsets[u]..offsets[u + 1] {
                    let coef = edges.weights()[e] * alpha.get(e).copied().unwrap_or(1.0);
                    if coef != 0.0 {
                        row.scaled_add(coef, &z.row(edges.targets()[e]));
                    }
                }
            }
            zs.push(z);
            raws.push(raw);
            alphas.push(alpha);
        }
        let pre = h.dot(&layer.w_self) + m.dot(&layer.w_neig);
        let act = relu(&pre);
        let norms = act.map_axis(Axis(1), |row| row.dot(&row).sqrt());
        let mut normalized = act;
        for (mut row, &nrm) in normalized.rows_mut().into_iter().zip(norms.iter()) {
            if nrm > 0.0 {
                row /= nrm;
            }
        }
        LayerCache {
            input: h,
            z: zs,
            raw: raws,
            alpha: alphas,
            m,
            pre,
            norms,
            normalized,
        }
    }

    /// `dropout` holds one pre-scaled keep mask per layer (training only).
    pub(crate) fn forward_pass(
        &self,
        c: &ComputationGraph,
        x: &Array2<f64>,
        dropout: Option<&[Array2<f64>]>,
    ) -> Result<ForwardPass> {
        self.check_inputs(c, x)?;
        let mut layers = Vec::with_capacity(self.num_layers());
        let mut h = x.clone();
        for (k, layer) in self.params.layers.iter().enumerate() {
            let cache = self.layer_forward(layer, c, h);
            h = match dropout {
                Some(masks) => &cache.normalized * &masks[k],
                None => cache.normalized.clone(),
            };
            layers.push(cache);
        }
        let head = &self.params.head;
        let head_pre = h.dot(&head.w1) + &head.b1;
        let head_act = relu(&head_pre);
        let logits = head_act.dot(&head.w2) + &head.b2;
        Ok(ForwardPass {
            layers,
            head_input: h,
            head_pre,
            head_act,
            logits,
        })
    }

    /// Class probabilities for every node (inference mode).
    pub fn forward(&self, c: &ComputationGraph, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(softmax_rows(&self.forward_pass(c, x, None)?.logits))
    }

    pub fn trace(&self, c: &ComputationGraph, x: &Array2<f64>) -> Result<Trace> {
        let pass = self.forward_pass(c, x, None)?;
        let probs = softmax_rows(&pass.logits);
        Ok(Trace {
            hidden: pass.layers.iter().map(|l| l.normalized.clone()).collect(),
            attention: pass.layers.into_iter().map(|l| l.alpha).collect(),
            logits: pass.logits,
            probs,
        })
    }

    /// Attention over `u`'s neighbors under `rel` at layer `k`, given that
    /// layer's input states. Empty when `u` has no neighbors or attention is off.
    pub fn attention_coefficients(
        &self,
        k: usize,
        rel: Relation,
        u: usize,
        hidden: &Array2<f64>,
        c: &ComputationGraph,
    ) -> Result<Vec<(usize, f64)>> {
        let r = relation_index(c, rel)?;
        let layer = self.layer(k)?;
        let Some(i) = layer.att_index(r) else {
            return Ok(Vec::new());
        };
        let a = &layer.att[i];
        let d = layer.d_out();
        let w = &layer.w_rel[r];
        let zu = hidden.row(u).dot(w);
        let src = zu.dot(&a.slice(s![..d]));
        let nbrs: Vec<usize> = c.edges(rel).neighbors(u).map(|(v, _)| v).collect();
        let logits: Vec<f64> = nbrs
            .iter()
            .map(|&v| {
                leaky(
                    src + hidden.row(v).dot(w).dot(&a.slice(s![d..])),
                    self.config.leaky_slope,
                )
            })
            .collect();
        Ok(nbrs.into_iter().zip(neighbor_softmax(&logits)).collect())
    }

    /// Message `m_u` at layer `k`, computed node by node.
    pub fn aggregate(
        &self,
        k: usize,
        u: usize,
        hidden: &Array2<f64>,
        c: &ComputationGraph,
    ) -> Result<Array1<f64>> {
        let layer = self.layer(k)?;
        let mut m = Array1::zeros(layer.d_out());
        for (r, rel) in c.relations().into_iter().enumerate() {
            let coefs: Vec<(usize, f64)> = if layer.att_index(r).is_some() {
                self.attention_coefficients(k, rel, u, hidden, c)?
            } else {
                c.edges(rel).neighbors(u).map(|(v, _)| (v, 1.0)).collect()
            };
            for ((v, a), (_, w)) in coefs.into_iter().zip(c.edges(rel).neighbors(u)) {
                m.scaled_add(w * a, &hidden.row(v).dot(&layer.w_rel[r]));
            }
        }
        Ok(m)
    }

    /// `normalize(relu(W_self^T h_u + W_neig^T m_u))`; zero stays zero.
    pub fn layer_update(&self, k: usize, h_u: ArrayView1<f64>, m_u: ArrayView1<f64>) -> Result<Array1<f64>> {
        let layer = self.layer(k)?;
        let v = (h_u.dot(&layer.w_self) + m_u.dot(&layer.w_neig)).mapv(|x| x.max(0.0));
        let norm = v.dot(&v).sqrt();
        Ok(if norm > 0.0 { v / norm } else { v })
    }

    fn layer(&self, k: usize) -> Result<&LayerParams> {
        self.params.layers.get(k).ok_or_else(|| {
            Error::InvalidArgument(format!("layer {k} out of range ({} layers)", self.num_layers()))
        })
    }

    /// Mean cross-entropy over `mask` plus `weight_decay / 2 * |theta|^2`.
    pub fn loss(
        &self,
        c: &ComputationGraph,
        x: &Array2<f64>,
        labels: &[Option<usize>],
        mask: &[usize],
        weight_decay: f64,
    ) -> Result<f64> {
        self.loss_with_dropout(c, x, labels, mask, weight_decay, None)
    }

    pub(crate) fn loss_with_dropout(
        &self,
        c: &ComputationGraph,
        x: &Array2<f64>,
        labels: &[Option<usize>],
        mask: &[usize],
        weight_decay: f64,
        dropout: Option<&[Array2<f64>]>,
    ) -> Result<f64> {
        check_mask(labels, mask, x.nrows())?;
        let pass = self.forward_pass(c, x, dropout)?;
        Ok(cross_entropy(&pass.logits, labels, mask) + 0.5 * weight_decay * self.params.squared_norm())
    }

    /// Loss as in [`WrgnnModel::loss`] and its gradient for every parameter.
    pub fn loss_and_gradients(
        &self,
        c: &ComputationGraph,
        x: &Array2<f64>,
        labels: &[Option<usize>],
        mask: &[usize],
        weight_decay: f64,
    ) -> Result<(f64, Params)> {
        self.loss_and_gradients_with_dropout(c, x, labels, mask, weight_decay, None)
    }

    pub(crate) fn loss_and_gradients_with_dropout(
        &self,
        c: &ComputationGraph,
        x: &Array2<f64>,
        labels: &[Option<usize>],
        mask: &[usize],
        weight_decay: f64,
        dropout: Option<&[Array2<f64>]>,
    ) -> Result<(f64, Params)> {
        check_mask(labels, mask, x.nrows())?;
        let pass = self.forward_pass(c, x, dropout)?;
        let loss =
            cross_entropy(&pass.logits, labels, mask) + 0.5 * weight_decay * self.params.squared_norm();
        let mut grads = self.backward(c, &pass, labels, mask, dropout);
        if weight_decay != 0.0 {
            for (mut g, (_, p)) in grads.tensors_mut().into_iter().zip(self.params.named_tensors()) {
                g.scaled_add(weight_decay, &p);
            }
        }
        Ok((loss, grads))
    }

    fn backward(
        &self,
        c: &ComputationGraph,
        pass: &ForwardPass,
        labels: &[Option<usize>],
        mask: &[usize],
        dropout: Option<&[Array2<f64>]>,
    ) -> Params {
        let mut grads = self.params.zeros_like();
        let head = &self.params.head;
        let probs = softmax_rows(&pass.logits);
        let scale = 1.0 / mask.len() as f64;
        let mut dlogits = Array2::zeros(probs.raw_dim());
        for &u in mask {
            let mut row = dlogits.row_mut(u);
            row.assign(&probs.row(u));
            row[labels[u].expect("masked nodes are labeled")] -= 1.0;
            row *= scale;
        }
        grads.head.w2 = pass.head_act.t().dot(&dlogits);
        grads.head.b2 = dlogits.sum_axis(Axis(0));
        let mut dpre = dlogits.dot(&head.w2.t());
        relu_mask(&pass.head_pre, &mut dpre);
        grads.head.w1 = pass.head_input.t().dot(&dpre);
        grads.head.b1 = dpre.sum_axis(Axis(0));
        let mut dh = dpre.dot(&head.w1.t());

        for k in (0..self.num_layers()).rev() {
            let cache = &pass.layers[k];
            let layer = &self.params.layers[k];
            let g = &mut grads.layers[k];
            if let Some(masks) = dropout {
                dh *= &masks[k];
            }
            // d normalize(a) = (I - n n^T) / |a|
            let mut dpre = dh;
            for ((mut row, n), &nrm) in dpre
                .rows_mut()
                .into_iter()
                .zip(cache.normalized.rows())
                .zip(cache.norms.iter())
            {
                if nrm > 0.0 {
                    let proj = row.dot(&n);
                    row.scaled_add(-proj, &n);
                    row /= nrm;
                } else {
                    row.fill(0.0);
                }
            }
            relu_mask(&cache.pre, &mut dpre);
            g.w_self = cache.input.t().dot(&dpre);
            g.w_neig = cache.m.t().dot(&dpre);
            let mut dinput = dpre.dot(&layer.w_self.t());
            let dm = dpre.dot(&layer.w_neig.t());

            for (r, edges) in c.relation_edges().enumerate() {
                if edges.is_empty() {
                    continue;
                }
                let z = &cache.z[r];
                let alpha = &cache.alpha[r];
                let raw = &cache.raw[r];
                let attention = !alpha.is_empty();
                let n = z.nrows();
                let mut dz = Array2::<f64>::zeros(z.raw_dim());
                let mut ds = Array1::<f64>::zeros(n);
                let mut dt = Array1::<f64>::zeros(n);
                let offsets = edges.offsets();
                let targets = edges.targets();
                let weights = edges.weights();
                for u in 0..n {
                    let range = offsets[u]..offsets[u + 1];
                    if range.is_empty() {
                        continue;
                    }
                    let dmu = dm.row(u);
                    if attention {
                        let dalpha: Vec<f64> = range
                            .clone()
                            .map(|e| weights[e] * dmu.dot(&z.row(targets[e])))
                            .collect();
                        let mean: f64 = range.clone().zip(&dalpha).map(|(e, d)| alpha[e] * d).sum();
                        for (e, da) in range.clone().zip(dalpha) {
                            let dlogit = alpha[e] * (da - mean);
                            let draw = if raw[e] > 0.0 {
                                dlogit
                            } else {
                                dlogit * self.config.leaky_slope
                            };
                            ds[u] += draw;
                            dt[targets[e]] += draw;
                        }
                    }
                    for e in range {
                        let coef = weights[e] * if attention { alpha[e] } else { 1.0 };
                        if coef != 0.0 {
                            dz.row_mut(targets[e]).scaled_add(coef, &dmu);
                        }
                    }
                }
                if let Some(i) = layer.att_index(r) {
                    let d = layer.d_out();
                    let a = &layer.att[i];
                    let mut ga = g.att[i].slice_mut(s![..d]);
                    ga += &z.t().dot(&ds);
                    let mut ga = g.att[i].slice_mut(s![d..]);
                    ga += &z.t().dot(&dt);
                    let a_src = a.slice(s![..d]);
                    let a_dst = a.slice(s![d..]);
                    for u in 0..n {
                        let mut row = dz.row_mut(u);
                        if ds[u] != 0.0 {
                            row.scaled_add(ds[u], &a_src);
                        }
                        if dt[u] != 0.0 {
                            row.scaled_add(dt[u], &a_dst);
                        }
                    }
                }
                g.w_rel[r] = cache.input.t().dot(&dz);
                dinput += &dz.dot(&layer.w_rel[r].t());
            }
            dh = dinput;
        }
        grads
    }
}

fn relation_index(c: &ComputationGraph, rel: Relation) -> Result<usize> {
    match rel {
        Relation::Structural(t) if t <= c.max_tau() => Ok(t),
        Relation::Proximity => Ok(c.num_relations() - 1),
        Relation::Structural(t) => Err(Error::InvalidArgument(format!(
            "relation {t} exceeds T={}",
            c.max_tau()
        ))),
    }
}

pub(crate) fn check_mask(labels: &[Option<usize>], mask: &[usize], n: usize) -> Result<()> {
    if mask.is_empty() {
        return Err(Error::InvalidArgument("empty node mask".into()));
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    for &u in mask {
        if u >= n {
            return Err(Error::NodeOutOfRange {
                node: u,
                num_nodes: n,
            });
        }
        if labels[u].is_none() {
            return Err(Error::InvalidArgument(format!("masked node {u} has no label")));
        }
    }
    Ok(())
}

/// Largest relative error between analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub scalars_checked: usize,
}

/// Compares every gradient entry with `(L(theta+h) - L(theta-h)) / 2h`.
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(
    model: &WrgnnModel,
    c: &ComputationGraph,
    x: &Array2<f64>,
    labels: &[Option<usize>],
    mask: &[usize],
    weight_decay: f64,
    step: f64,
    dropout: Option<&[Array2<f64>]>,
) -> Result<GradCheck> {
    let (_, grads) = model.loss_and_gradients_with_dropout(c, x, labels, mask, weight_decay, dropout)?;
    let names: Vec<String> = grads.named_tensors().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Vec<f64>> = grads
        .named_tensors()
        .into_iter()
        .map(|(_, t)| t.iter().copied().collect())
        .collect();
    let mut probe = model.clone();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        scalars_checked: 0,
    };
    for (ti, name) in names.iter().enumerate() {
        for j in 0..analytic[ti].len() {
            let original = nth_scalar(&mut probe.params, ti, j, None);
            nth_scalar(&mut probe.params, ti, j, Some(original + step));
            let plus = probe.loss_with_dropout(c, x, labels, mask, weight_decay, dropout)?;
            nth_scalar(&mut probe.params, ti, j, Some(original - step));
            let minus = probe.loss_with_dropout(c, x, labels, mask, weight_decay, dropout)?;
            nth_scalar(&mut probe.params, ti, j, Some(original));
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[ti][j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            report.scalars_checked += 1;
            if rel > report.max_rel_error || !rel.is_finite() {
                report.max_rel_error = rel;
                report.worst_tensor = name.clone();
                report.worst_index = j;
            }
        }
    }
    Ok(report)
}

/// Reads the `j`-th scalar of tensor `ti`, optionally overwriting it.
fn nth_scalar(params: &mut Params, ti: usize, j: usize, set: Option<f64>) -> f64 {
    let mut tensors = params.tensors_mut();
    let slot = tensors[ti].iter_mut().nth(j).expect("index in range");
    let old = *slot;
    if let Some(v) = set {
        *slot = v;
    }
    old
}
