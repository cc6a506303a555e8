use super::net::ParamVector;

/// One evaluation of a scalar objective for finite differencing. `kink`
/// identifies the smooth piece the evaluation landed on (see
/// [`Tape::kink_signature`](super::Tape::kink_signature)); use `0` for
/// smooth objectives.
#[derive(Debug, Clone, Copy)]
pub struct Probe {
    pub value: f64,
    pub kink: u64,
}

impl Probe {
    pub fn smooth(value: f64) -> Self {
        Probe { value, kink: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    /// max over checked coordinates of `|analytic - fd| / max(1, |fd|)`.
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
    /// Coordinates whose `+-step` probes crossed a ReLU kink.
    pub skipped: usize,
}

/// Compare `analytic` against central differences of `f` at `params`.
/// `f` must be deterministic (noise held fixed). Panics if `step <= 0` or
/// the gradient length does not match.
pub fn finite_difference_check(
    mut f: impl FnMut(&ParamVector) -> Probe,
    params: &ParamVector,
    analytic: &[f64],
    step: f64,
) -> FdReport {
    assert!(step > 0.0, "finite difference step must be positive");
    assert_eq!(analytic.len(), params.len(), "gradient length");
    let centre = f(params).kink;
    let mut values = params.values().to_vec();
    let mut report = FdReport {
        max_rel_error: 0.0,
        worst_index: None,
        checked: 0,
        skipped: 0,
    };
    for i in 0..values.len() {
        let x = values[i];
        values[i] = x + step;
        let plus = f(&params.with_values(values.clone()).expect("finite perturbation"));
        values[i] = x - step;
        let minus = f(&params.with_values(values.clone()).expect("finite perturbation"));
        values[i] = x;
        if plus.kink != centre || minus.kink != centre {
            report.skipped += 1;
            continue;
        }
        let fd = (plus.value - minus.value) / (2.0 * step);
        let err = (analytic[i] - fd).abs() / fd.abs().max(1.0);
        report.checked += 1;
        if err > report.max_rel_error || report.worst_index.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            if err >= report.max_rel_error {
                report.worst_index = Some(i);
            }
        }
    }
    report
}
