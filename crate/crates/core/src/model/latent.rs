use serde::{Deserialize, Serialize};

use crate::design::DyadDesign;

/// Latent traits for one realisation of the model.
///
/// `gamma` is stored per undirected pair as `[slot 0, slot 1]`; slot 0 is the
/// direction in which the lower-indexed individual acts. The two directions
/// are separate quantities.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LatentState {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<[f64; 2]>,
    /// Cluster random intercepts, empty when the model has none.
    #[serde(default)]
    pub u: Vec<f64>,
}

impl LatentState {
    pub fn zeros(design: &DyadDesign, clusters: usize) -> Self {
        LatentState {
            alpha: vec![0.0; design.num_individuals()],
            beta: vec![0.0; design.num_individuals()],
            gamma: vec![[0.0; 2]; design.num_pairs()],
            u: vec![0.0; clusters],
        }
    }

    /// Gamma of the directed dyad with index `dyad`.
    pub fn gamma_of(&self, design: &DyadDesign, dyad: usize) -> f64 {
        let d = &design.dyads()[dyad];
        self.gamma[d.pair][d.slot as usize]
    }

    /// Gamma of the reverse direction of `dyad`.
    pub fn gamma_reverse_of(&self, design: &DyadDesign, dyad: usize) -> f64 {
        let d = &design.dyads()[dyad];
        self.gamma[d.pair][1 - d.slot as usize]
    }

    /// Checks that the state covers every individual and pair of `design`.
    pub fn conforms_to(&self, design: &DyadDesign) -> bool {
        self.alpha.len() == design.num_individuals()
            && self.beta.len() == design.num_individuals()
            && self.gamma.len() == design.num_pairs()
    }

    pub fn len(&self) -> usize {
        self.alpha.len() + self.beta.len() + 2 * self.gamma.len() + self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
