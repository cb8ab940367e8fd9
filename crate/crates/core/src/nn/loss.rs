//! Classification and distillation losses. Every loss is a mean over rows
//! and returns its exact gradient with respect to the student-side input.

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};

/// `s_τ(v)_i = exp(v_i/τ) / Σ_k exp(v_k/τ)`, computed with max subtraction.
pub fn softmax_temperature(v: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data("softmax input must be finite".into()));
    }
    let mut out = v.to_vec();
    softmax_in_place(&mut out, tau);
    Ok(out)
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Parameter(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

pub(crate) fn softmax_in_place(v: &mut [f64], tau: f64) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = ((*x - max) / tau).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// `log s_τ(v)`, via log-sum-exp.
pub(crate) fn log_softmax(v: &[f64], tau: f64) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = v.iter().map(|x| ((x - max) / tau).exp()).sum::<f64>().ln();
    v.iter().map(|x| (x - max) / tau - lse).collect()
}

pub fn softmax_rows(logits: &Matrix, tau: f64) -> Result<Matrix> {
    check_tau(tau)?;
    let mut out = logits.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i), tau);
    }
    Ok(out)
}

fn check_labels(logits: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != logits.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} rows",
            labels.len(),
            logits.rows()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= logits.cols()) {
        return Err(Error::Data(format!(
            "label {bad} out of range for {} classes",
            logits.cols()
        )));
    }
    Ok(())
}

fn check_same_shape(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "teacher is {:?} but student is {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Mean softmax cross-entropy.
pub fn cross_entropy_loss(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    check_labels(logits, labels)?;
    let n = logits.rows() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let logp = log_softmax(logits.row(i), 1.0);
        loss -= logp[y];
        let g = grad.row_mut(i);
        for (gk, lp) in g.iter_mut().zip(&logp) {
            *gk = lp.exp() / n;
        }
        g[y] -= 1.0 / n;
    }
    Ok((loss / n, grad))
}

/// `τ² · KL(s_τ(teacher) ‖ s_τ(student))`, mean over rows. Only the student
/// receives a gradient.
pub fn kl_distill_loss(teacher: &Matrix, student: &Matrix, tau: f64) -> Result<(f64, Matrix)> {
    check_tau(tau)?;
    check_same_shape(teacher, student)?;
    let n = student.rows() as f64;
    let mut grad = Matrix::zeros(student.rows(), student.cols());
    let mut loss = 0.0;
    for i in 0..student.rows() {
        let log_p = log_softmax(teacher.row(i), tau);
        let log_q = log_softmax(student.row(i), tau);
        let mut kl = 0.0;
        for (lp, lq) in log_p.iter().zip(&log_q) {
            let p = lp.exp();
            if p > 0.0 {
                kl += p * (lp - lq);
            }
        }
        // Rounding can leave a tiny negative sum when p == q.
        loss += kl.max(0.0);
        // d/dz_j of τ²·KL = τ (q_j − p_j)
        for (g, (lp, lq)) in grad.row_mut(i).iter_mut().zip(log_p.iter().zip(&log_q)) {
            *g = tau * (lq.exp() - lp.exp()) / n;
        }
    }
    Ok((tau * tau * loss / n, grad))
}

/// `(1 − α)·CE(student, labels) + α·τ²·KL(s_τ(teacher) ‖ s_τ(student))`.
pub fn ce_kl_distill_loss(
    teacher: &Matrix,
    student: &Matrix,
    labels: &[usize],
    alpha: f64,
    tau: f64,
) -> Result<(f64, Matrix)> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    check_tau(tau)?;
    check_same_shape(teacher, student)?;
    if alpha == 1.0 {
        return kl_distill_loss(teacher, student, tau);
    }
    if alpha == 0.0 {
        return cross_entropy_loss(student, labels);
    }
    let (ce, ce_grad) = cross_entropy_loss(student, labels)?;
    let (kl, kl_grad) = kl_distill_loss(teacher, student, tau)?;
    let mut grad = ce_grad.scale(1.0 - alpha);
    for (g, k) in grad.as_mut_slice().iter_mut().zip(kl_grad.as_slice()) {
        *g += alpha * k;
    }
    Ok(((1.0 - alpha) * ce + alpha * kl, grad))
}

/// Mean over rows of `1 − cos(teacher_i, student_i)`.
pub fn cosine_distill_loss(teacher: &Matrix, student: &Matrix) -> Result<(f64, Matrix)> {
    cosine_distill_impl(teacher, student, false)
}

/// As [`cosine_distill_loss`], but rows where the teacher output is exactly
/// zero (a dead ReLU representation) contribute nothing instead of failing.
pub(crate) fn cosine_distill_loss_skip_zero(teacher: &Matrix, student: &Matrix) -> Result<(f64, Matrix)> {
    cosine_distill_impl(teacher, student, true)
}

fn cosine_distill_impl(teacher: &Matrix, student: &Matrix, skip_zero_teacher: bool) -> Result<(f64, Matrix)> {
    check_same_shape(teacher, student)?;
    let n = student.rows() as f64;
    let mut grad = Matrix::zeros(student.rows(), student.cols());
    let mut loss = 0.0;
    for i in 0..student.rows() {
        let t = teacher.row(i);
        let s = student.row(i);
        let tn = norm(t);
        let sn = norm(s);
        if tn == 0.0 && skip_zero_teacher {
            continue;
        }
        if tn == 0.0 || sn == 0.0 {
            return Err(Error::NumericalDomain(format!(
                "row {i} has zero norm in cosine distillation"
            )));
        }
        let c = dot(t, s) / (tn * sn);
        loss += 1.0 - c;
        for (g, (tj, sj)) in grad.row_mut(i).iter_mut().zip(t.iter().zip(s)) {
            *g = -(tj / (tn * sn) - c * sj / (sn * sn)) / n;
        }
    }
    Ok((loss / n, grad))
}
