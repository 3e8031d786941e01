//! Utility, membership inference, orthogonality audit, loss contours and
//! pseudo-label agreement.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};
use crate::nn::{argmax_columns, softmax_columns, ActivationTrace, Network};
use crate::rng::SeededRng;
use crate::subspace::NullProjector;
use crate::unlearn::PseudoLabeledSample;

const CHUNK: usize = 512;

/// Mean softmax cross-entropy of `net` on `ds`, from log-sum-exp of the logits.
pub fn mean_loss(net: &Network, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Empty("loss on empty dataset".into()));
    }
    let idx: Vec<usize> = (0..ds.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(CHUNK) {
        let logits = net.forward(&ds.columns(chunk), false)?.logits;
        for (j, &i) in chunk.iter().enumerate() {
            let col = logits.column(j);
            let m = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + col.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
            total += lse - col[ds.labels()[i]];
        }
    }
    let loss = total / ds.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite loss".into()));
    }
    Ok(loss)
}

/// Max-softmax confidence per sample.
pub fn confidences(net: &Network, ds: &Dataset) -> Result<Vec<f64>> {
    if ds.is_empty() {
        return Ok(Vec::new());
    }
    let p = net.predict_proba(&ds.all_columns())?;
    Ok((0..p.cols())
        .map(|j| p.column(j).into_iter().fold(0.0, f64::max))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub acc_remaining_test: f64,
    /// Absent when there is no unlearn-class test data.
    pub acc_unlearn_test: Option<f64>,
    /// Accuracy per class over both test sets; absent for classes with no samples.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub loss_remaining: f64,
}

pub fn utility(net: &Network, test_remaining: &Dataset, test_unlearn: &Dataset) -> Result<UtilityReport> {
    if test_remaining.is_empty() {
        return Err(Error::Empty("remaining test set".into()));
    }
    let k = net.num_classes();
    let mut hits = vec![0usize; k];
    let mut counts = vec![0usize; k];
    let mut score = |ds: &Dataset| -> Result<Option<f64>> {
        if ds.is_empty() {
            return Ok(None);
        }
        if ds.dim() != net.input_dim() {
            return Err(Error::Shape(format!("test features have dimension {}, network expects {}", ds.dim(), net.input_dim())));
        }
        let pred = argmax_columns(&net.predict_proba(&ds.all_columns())?);
        let mut correct = 0;
        for (&p, &y) in pred.iter().zip(ds.labels()) {
            counts[y] += 1;
            if p == y {
                hits[y] += 1;
                correct += 1;
            }
        }
        Ok(Some(correct as f64 / ds.len() as f64))
    };
    let acc_remaining_test = score(test_remaining)?.expect("non-empty");
    let acc_unlearn_test = score(test_unlearn)?;
    let per_class_accuracy = hits
        .iter()
        .zip(&counts)
        .map(|(&h, &c)| (c > 0).then(|| h as f64 / c as f64))
        .collect();
    Ok(UtilityReport {
        acc_remaining_test,
        acc_unlearn_test,
        per_class_accuracy,
        loss_remaining: mean_loss(net, test_remaining)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiaReport {
    /// Samples with confidence at or above this are predicted members.
    pub threshold: f64,
    /// Fraction of the unlearning set predicted non-member.
    pub acc_mia: f64,
    pub holdout_balanced_accuracy: f64,
    /// Size of each holdout after balancing.
    pub holdout_size: usize,
    pub holdout_description: String,
    pub member_mean_confidence: f64,
    pub nonmember_mean_confidence: f64,
    pub unlearn_mean_confidence: f64,
}

/// Threshold maximizing balanced accuracy on equal-size holdouts
/// (member iff confidence ≥ threshold). Among equally good thresholds the
/// largest wins, so ties lean towards predicting non-member. Returns the
/// threshold and its balanced accuracy.
pub fn fit_threshold(members: &[f64], nonmembers: &[f64]) -> Result<(f64, f64)> {
    let n = members.len();
    if n == 0 || nonmembers.len() != n {
        return Err(Error::InvalidArgument("holdouts must be non-empty and of equal size".into()));
    }
    // (value, +1 member / -1 non-member), descending
    let mut all: Vec<(f64, i64)> = members
        .iter()
        .map(|&c| (c, 1))
        .chain(nonmembers.iter().map(|&c| (c, -1)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let above_all = all[0].0.next_up();
    // with nothing predicted member the balanced accuracy is exactly 1/2
    let (mut best_t, mut best_diff) = (above_all, 0i64);
    let mut diff = 0i64;
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        while i < all.len() && all[i].0 == t {
            diff += all[i].1;
            i += 1;
        }
        if diff > best_diff {
            best_diff = diff;
            best_t = t;
        }
    }
    Ok((best_t, 0.5 + best_diff as f64 / (2 * n) as f64))
}

pub fn predicted_members(confidences: &[f64], threshold: f64) -> usize {
    confidences.iter().filter(|&&c| c >= threshold).count()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Confidence-threshold membership inference. The holdouts are truncated
/// to equal size (keep them shuffled); the fitted threshold is applied to
/// `d_u` and the true-negative rate reported.
pub fn mia(net_u: &Network, d_u: &Dataset, member_holdout: &Dataset, nonmember_holdout: &Dataset, description: &str) -> Result<MiaReport> {
    if d_u.is_empty() {
        return Err(Error::Empty("unlearning set for membership inference".into()));
    }
    let n = member_holdout.len().min(nonmember_holdout.len());
    if n == 0 {
        return Err(Error::Empty("membership holdout".into()));
    }
    let members = confidences(net_u, &member_holdout.take(n))?;
    let nonmembers = confidences(net_u, &nonmember_holdout.take(n))?;
    let (threshold, bal) = fit_threshold(&members, &nonmembers)?;
    let unlearn = confidences(net_u, d_u)?;
    let negatives = unlearn.len() - predicted_members(&unlearn, threshold);
    Ok(MiaReport {
        threshold,
        acc_mia: negatives as f64 / unlearn.len() as f64,
        holdout_balanced_accuracy: bal,
        holdout_size: n,
        holdout_description: description.to_string(),
        member_mean_confidence: mean(&members),
        nonmember_mean_confidence: mean(&nonmembers),
        unlearn_mean_confidence: mean(&unlearn),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Per layer, max over trace columns r of ‖ΔW·r‖ / (‖ΔW‖_F·‖r‖); 0 when ΔW = 0.
    pub residuals: Vec<f64>,
    pub loss_before: Option<f64>,
    pub loss_after: Option<f64>,
    pub loss_change: Option<f64>,
}

impl AuditReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }

    pub fn relative_loss_change(&self) -> Option<f64> {
        Some(self.loss_change? / self.loss_before?)
    }
}

pub fn layer_residual(delta: &Matrix, inputs: &Matrix) -> Result<f64> {
    let dn = delta.frobenius_norm();
    if dn == 0.0 {
        return Ok(0.0);
    }
    let moved = delta.matmul(inputs)?;
    let mut worst: f64 = 0.0;
    for j in 0..inputs.cols() {
        let rn = norm(&inputs.column(j));
        if rn > 0.0 {
            worst = worst.max(norm(&moved.column(j)) / (dn * rn));
        }
    }
    Ok(worst)
}

/// How far the weight change between two networks reaches into the
/// recorded inputs, plus the loss change on `remaining` if given.
pub fn orthogonality_audit(
    net_o: &Network,
    net_u: &Network,
    remaining_trace: &ActivationTrace,
    remaining: Option<&Dataset>,
) -> Result<AuditReport> {
    net_o.check_same_architecture(net_u)?;
    let delta = net_u.weight_delta(net_o)?;
    if remaining_trace.layers.len() != delta.len() {
        return Err(Error::Shape(format!(
            "trace has {} layers, network has {}",
            remaining_trace.layers.len(),
            delta.len()
        )));
    }
    let residuals = delta
        .iter()
        .zip(&remaining_trace.layers)
        .map(|(d, r)| layer_residual(d, r))
        .collect::<Result<Vec<_>>>()?;
    let (loss_before, loss_after) = match remaining {
        Some(ds) => (Some(mean_loss(net_o, ds)?), Some(mean_loss(net_u, ds)?)),
        None => (None, None),
    };
    Ok(AuditReport {
        residuals,
        loss_before,
        loss_after,
        loss_change: loss_before.zip(loss_after).map(|(a, b)| (b - a).abs()),
    })
}

/// Per-layer weight perturbation; layers without a component are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub layers: Vec<Matrix>,
    /// Indices of layers with a unit-norm component.
    pub active_layers: Vec<usize>,
    pub kind: String,
}

/// Random directions inside and outside the null space of `p`, unit
/// Frobenius norm on every layer where both spaces are non-trivial.
pub fn contour_directions(net: &Network, p: &NullProjector, seed: u64) -> Result<(Direction, Direction)> {
    if p.layers.len() != net.num_layers() {
        return Err(Error::Shape("projector does not match the network".into()));
    }
    let mut rng = SeededRng::new(seed);
    let mut null_layers = Vec::new();
    let mut off_layers = Vec::new();
    let mut active = Vec::new();
    for (l, pl) in p.layers.iter().enumerate() {
        let (rows, cols) = net.weight(l).shape();
        let dim = pl.projector.rows();
        if pl.rank == 0 || pl.rank == dim {
            null_layers.push(Matrix::zeros(rows, cols));
            off_layers.push(Matrix::zeros(rows, cols));
            continue;
        }
        let mut gaussian = |r, c| Matrix::from_vec(r, c, (0..r * c).map(|_| rng.normal()).collect());
        let null = gaussian(rows, cols)?.matmul(&pl.projector)?;
        let off = gaussian(rows, cols)?.matmul(&pl.retained_basis)?.matmul_t(&pl.retained_basis)?;
        null_layers.push(null.scale(1.0 / null.frobenius_norm()));
        off_layers.push(off.scale(1.0 / off.frobenius_norm()));
        active.push(l);
    }
    if active.is_empty() {
        return Err(Error::InvalidArgument("no layer has both a null space and a retained space".into()));
    }
    Ok((
        Direction { layers: null_layers, active_layers: active.clone(), kind: "null".into() },
        Direction { layers: off_layers, active_layers: active, kind: "retained".into() },
    ))
}

fn check_direction(net: &Network, d: &Direction) -> Result<()> {
    if d.layers.len() != net.num_layers() {
        return Err(Error::Shape(format!("{} direction has the wrong layer count", d.kind)));
    }
    for (l, m) in d.layers.iter().enumerate() {
        if m.shape() != net.weight(l).shape() {
            return Err(Error::Shape(format!("{} direction layer {l} has the wrong shape", d.kind)));
        }
        let n = m.frobenius_norm();
        let expect_unit = d.active_layers.contains(&l);
        if (expect_unit && (n - 1.0).abs() > 1e-9) || (!expect_unit && n != 0.0) {
            return Err(Error::InvalidArgument(format!("{} direction layer {l} has norm {n}", d.kind)));
        }
    }
    if d.active_layers.is_empty() {
        return Err(Error::InvalidArgument(format!("{} direction is empty", d.kind)));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourGrid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// `loss[(i, j)]` is the loss at `alphas[i]` along the null direction
    /// and `betas[j]` along the retained direction.
    pub loss: Matrix,
    pub null_kind: String,
    pub off_kind: String,
    pub active_layers: Vec<usize>,
}

impl ContourGrid {
    fn zero_index(axis: &[f64]) -> Option<usize> {
        axis.iter().position(|&a| a == 0.0)
    }

    pub fn center(&self) -> Option<f64> {
        Some(self.loss[(Self::zero_index(&self.alphas)?, Self::zero_index(&self.betas)?)])
    }

    /// Max |L − L_center| along the β = 0 line.
    pub fn null_axis_variation(&self) -> Option<f64> {
        let j = Self::zero_index(&self.betas)?;
        let c = self.center()?;
        Some((0..self.alphas.len()).map(|i| (self.loss[(i, j)] - c).abs()).fold(0.0, f64::max))
    }

    /// Max |L − L_center| along the α = 0 line.
    pub fn off_axis_variation(&self) -> Option<f64> {
        let i = Self::zero_index(&self.alphas)?;
        let c = self.center()?;
        Some((0..self.betas.len()).map(|j| (self.loss[(i, j)] - c).abs()).fold(0.0, f64::max))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,beta,loss\n");
        for (i, a) in self.alphas.iter().enumerate() {
            for (j, b) in self.betas.iter().enumerate() {
                out.push_str(&format!("{a},{b},{}\n", self.loss[(i, j)]));
            }
        }
        out
    }
}

/// Evenly spaced axis from `-half` to `half` with `n` points; odd `n` puts an exact 0 in the middle.
pub fn symmetric_axis(half: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.0];
    }
    let mid = (n - 1) as f64 / 2.0;
    (0..n)
        .map(|i| if 2 * i == n - 1 { 0.0 } else { half * (i as f64 - mid) / mid })
        .collect()
}

/// Remaining-set loss over `θ + α·null_dir + β·off_dir`.
pub fn loss_contour(
    net: &Network,
    null_dir: &Direction,
    off_dir: &Direction,
    alphas: &[f64],
    betas: &[f64],
    remaining: &Dataset,
) -> Result<ContourGrid> {
    check_direction(net, null_dir)?;
    check_direction(net, off_dir)?;
    if alphas.is_empty() || betas.is_empty() {
        return Err(Error::Empty("contour axis".into()));
    }
    let mut loss = Matrix::zeros(alphas.len(), betas.len());
    for (i, &a) in alphas.iter().enumerate() {
        for (j, &b) in betas.iter().enumerate() {
            let mut probe = net.clone();
            if a != 0.0 {
                probe.add_scaled(a, &null_dir.layers)?;
            }
            if b != 0.0 {
                probe.add_scaled(b, &off_dir.layers)?;
            }
            loss[(i, j)] = mean_loss(&probe, remaining)?;
        }
    }
    Ok(ContourGrid {
        alphas: alphas.to_vec(),
        betas: betas.to_vec(),
        loss,
        null_kind: null_dir.kind.clone(),
        off_kind: off_dir.kind.clone(),
        active_layers: null_dir.active_layers.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub agreement: f64,
    pub pseudo_histogram: Vec<usize>,
    pub retrained_histogram: Vec<usize>,
}

/// Fraction of samples whose pseudo-label equals the retrained model's top-1.
pub fn pseudo_label_agreement(pseudo: &[PseudoLabeledSample], net_r: &Network) -> Result<AgreementReport> {
    if pseudo.is_empty() {
        return Err(Error::Empty("pseudo-labelled samples".into()));
    }
    let cols: Vec<Vec<f64>> = pseudo.iter().map(|s| s.features.clone()).collect();
    let pred = argmax_columns(&softmax_columns(&net_r.forward(&Matrix::from_columns(&cols)?, false)?.logits));
    let k = net_r.num_classes();
    let mut pseudo_histogram = vec![0; k];
    let mut retrained_histogram = vec![0; k];
    let mut agree = 0;
    for (s, &p) in pseudo.iter().zip(&pred) {
        if s.pseudo_label >= k {
            return Err(Error::InvalidLabel { label: s.pseudo_label, num_classes: k });
        }
        pseudo_histogram[s.pseudo_label] += 1;
        retrained_histogram[p] += 1;
        agree += usize::from(p == s.pseudo_label);
    }
    Ok(AgreementReport {
        agreement: agree as f64 / pseudo.len() as f64,
        pseudo_histogram,
        retrained_histogram,
    })
}
