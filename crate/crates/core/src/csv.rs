/// Full-precision scientific notation (17 significant digits); non-finite
/// values as `nan`, `inf`, `-inf`.
pub(crate) fn fmt_f(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
