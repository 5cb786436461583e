use super::{ModelError, ModelParams};

/// Orders states by descending P(`output` | state, `emission_input`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderingRule {
    pub emission_input: usize,
    pub output: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Canonicalized {
    pub params: ModelParams,
    /// New state `i` was old state `permutation[i]`.
    pub permutation: Vec<usize>,
    /// Two states shared the ordering statistic; the identity was kept.
    pub tie: bool,
}

const TIE_TOLERANCE: f64 = 1e-12;

/// Relabels states so the ordering statistic is strictly decreasing.
///
/// Resolves EM label switching. On a tie the identity permutation is used and
/// `tie` is set.
pub fn canonicalize_states(params: &ModelParams, rule: OrderingRule) -> Result<Canonicalized, ModelError> {
    params.validate()?;
    let spec = params.spec();
    if rule.emission_input >= spec.n_emission_inputs || rule.output >= spec.n_outputs {
        return Err(ModelError::InvalidConfig(format!(
            "ordering rule {rule:?} is outside the alphabet"
        )));
    }
    let stat = |s: usize| params.emission(rule.emission_input, s, rule.output);
    let mut order: Vec<usize> = (0..spec.n_states).collect();
    order.sort_by(|&a, &b| stat(b).total_cmp(&stat(a)));

    let tie = order.windows(2).any(|w| (stat(w[0]) - stat(w[1])).abs() <= TIE_TOLERANCE);
    let permutation = if tie { (0..spec.n_states).collect() } else { order };
    Ok(Canonicalized {
        params: params.permute_states(&permutation)?,
        permutation,
        tie,
    })
}
