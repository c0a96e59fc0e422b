//! Small dense-vector helpers shared across modules.

pub(crate) fn dot(w: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(w.len(), v.len());
    w.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub(crate) fn norm(w: &[f64]) -> f64 {
    dot(w, w).sqrt()
}

pub(crate) fn inf_norm(w: &[f64]) -> f64 {
    w.iter().fold(0.0, |m, x| m.max(x.abs()))
}
