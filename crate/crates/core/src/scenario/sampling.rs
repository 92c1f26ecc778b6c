use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    /// Independent Uniform[-1, 1] coordinates.
    #[default]
    Uniform,
}

/// `M` normalized disturbance sequences `delta_i ∈ [-1, 1]^{n × N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub seed: u64,
    pub measure: Measure,
    /// `deltas[i][k]` is the step-`k` vector of scenario `i`.
    pub deltas: Vec<Vec<Vec<f64>>>,
    /// Position of each scenario in the set it was drawn as.
    pub ids: Vec<usize>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based Uniform[-1, 1] draw keyed by `(seed, scenario, step, coord)`.
pub fn uniform_draw(seed: u64, scenario: u64, step: u64, coord: u64) -> f64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ scenario);
    h = splitmix64(h ^ step);
    h = splitmix64(h ^ coord);
    let unit = (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    2.0 * unit - 1.0
}

pub fn sample_scenarios(n: usize, horizon: usize, count: usize, seed: u64) -> ScenarioSet {
    let deltas = (0..count)
        .map(|i| {
            (0..horizon)
                .map(|k| {
                    (0..n)
                        .map(|j| uniform_draw(seed, i as u64, k as u64, j as u64))
                        .collect()
                })
                .collect()
        })
        .collect();
    ScenarioSet {
        seed,
        measure: Measure::Uniform,
        deltas,
        ids: (0..count).collect(),
    }
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn subset(&self, keep: &[usize]) -> ScenarioSet {
        ScenarioSet {
            seed: self.seed,
            measure: self.measure,
            deltas: keep.iter().map(|&i| self.deltas[i].clone()).collect(),
            ids: keep.iter().map(|&i| self.ids[i]).collect(),
        }
    }

    pub fn without(&self, drop: usize) -> ScenarioSet {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| i != drop).collect();
        self.subset(&keep)
    }

    /// Every scenario twice, copies adjacent.
    pub fn duplicated(&self) -> ScenarioSet {
        let keep: Vec<usize> = (0..self.len()).flat_map(|i| [i, i]).collect();
        self.subset(&keep)
    }

    pub fn push(&mut self, delta: Vec<Vec<f64>>) {
        self.ids.push(self.ids.iter().max().map_or(0, |m| m + 1));
        self.deltas.push(delta);
    }
}
