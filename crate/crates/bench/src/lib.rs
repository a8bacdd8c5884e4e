//! Fixed workloads shared by the benchmarks.

use econ_core::estimation::{predicted_ce, CeObservation, CptParams};
use econ_core::games::GgGridSpec;
use econ_core::{Domain, UgConfig};

/// Parameters used to generate noiseless certainty equivalents.
pub fn reference_params() -> CptParams {
    CptParams { alpha_gain: 0.88, beta_loss: 0.88, lambda: 2.25, phi_plus: 0.65, phi_minus: 0.69 }
}

/// Noiseless observations on the default grid, split into gain and loss-or-mixed cells.
pub fn grid_observations(params: &CptParams) -> (Vec<CeObservation>, Vec<CeObservation>) {
    let cells = GgGridSpec::default().lotteries().expect("default grid is valid");
    cells
        .into_iter()
        .map(|l| CeObservation::new(l, predicted_ce(&l, params)))
        .partition(|o| o.lottery.domain == Domain::Gain)
}

/// A mix of proposer answers in the shapes agents tend to produce.
pub fn proposer_answers() -> Vec<(String, UgConfig)> {
    let shapes = [
        "5",
        "I offer 4 coins.",
        "My offer: 3 out of 10.",
        "I'll give 5, that seems fair.",
        "I would rather not make an offer in this game.",
        "Either 4 or 5 would work.",
    ];
    (2..=10).flat_map(|pool| shapes.iter().map(move |s| (s.to_string(), UgConfig::proposer(pool)))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workloads_are_nonempty() {
        let (gain, rest) = grid_observations(&reference_params());
        assert!(!gain.is_empty() && !rest.is_empty());
        assert_eq!(proposer_answers().len(), 54);
    }
}
