//! Agent-based SIR epidemic on a square domain with periodic boundary
//! conditions. This is the ground-truth data generator: only the aggregate
//! compartment densities are observed.

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compartment {
    Susceptible,
    Infected,
    Recovered,
}

/// Model constants of the agent simulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbmParams {
    /// Infection radius.
    pub r_infect: f64,
    /// Infection probability per infected-susceptible contact and step.
    pub p_infect: f64,
    /// Recovery time in steps.
    pub t_infectious: u32,
    /// Per-axis random-walk standard deviation for S, I, R agents.
    pub diffusivity_s: f64,
    pub diffusivity_i: f64,
    pub diffusivity_r: f64,
    /// Side length of the periodic square domain.
    pub domain: f64,
}

impl Default for AbmParams {
    fn default() -> Self {
        AbmParams {
            r_infect: 0.3,
            p_infect: 0.2,
            t_infectious: 14,
            diffusivity_s: 0.03,
            diffusivity_i: 0.03,
            diffusivity_r: 0.03,
            domain: 10.0,
        }
    }
}

/// Squared-distance-free torus metric: per axis the shorter way around.
pub fn torus_distance(x: [f64; 2], y: [f64; 2], domain: f64) -> f64 {
    let mut d2 = 0.0;
    for i in 0..2 {
        let straight = (x[i] - y[i]).abs();
        let wrapped = domain - straight;
        let d = straight.min(wrapped);
        d2 += d * d;
    }
    d2.sqrt()
}

/// All agents of one simulation.
pub struct AgentPopulation {
    pub params: AbmParams,
    positions: Vec<[f64; 2]>,
    compartment: Vec<Compartment>,
    /// Time since infection, tracked for infected agents.
    tau: Vec<u32>,
}

impl AgentPopulation {
    /// One infected agent and `n_agents - 1` susceptible agents at uniform
    /// random positions; patient zero is drawn uniformly among the agents.
    pub fn init_random(n_agents: usize, params: AbmParams, rng: &mut StdRng) -> Self {
        assert!(n_agents >= 1, "population needs at least one agent");
        let domain = params.domain;
        let positions = (0..n_agents)
            .map(|_| [rng.random_range(0.0..domain), rng.random_range(0.0..domain)])
            .collect();
        let mut compartment = vec![Compartment::Susceptible; n_agents];
        let patient_zero = rng.random_range(0..n_agents);
        compartment[patient_zero] = Compartment::Infected;
        AgentPopulation {
            params,
            positions,
            compartment,
            tau: vec![0; n_agents],
        }
    }

    pub fn n_agents(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn compartments(&self) -> &[Compartment] {
        &self.compartment
    }

    pub fn tau(&self) -> &[u32] {
        &self.tau
    }

    /// Compartment counts (S, I, R).
    pub fn counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for k in &self.compartment {
            match k {
                Compartment::Susceptible => c.0 += 1,
                Compartment::Infected => c.1 += 1,
                Compartment::Recovered => c.2 += 1,
            }
        }
        c
    }

    pub fn densities(&self) -> [f64; 3] {
        let n = self.n_agents() as f64;
        let (s, i, r) = self.counts();
        [s as f64 / n, i as f64 / n, r as f64 / n]
    }

    /// One iteration: infection sweep over the pre-step infected set,
    /// infection-clock advance, recovery, then diffusive movement with
    /// periodic wrapping. Agents infected in the current step neither infect
    /// nor advance their clock until the next step.
    pub fn step(&mut self, rng: &mut StdRng) {
        let n = self.n_agents();
        let p = &self.params;
        let infected_before: Vec<usize> = (0..n)
            .filter(|&i| self.compartment[i] == Compartment::Infected)
            .collect();

        for &j in &infected_before {
            let xj = self.positions[j];
            for i in 0..n {
                if self.compartment[i] != Compartment::Susceptible {
                    continue;
                }
                if torus_distance(self.positions[i], xj, p.domain) <= p.r_infect
                    && rng.random_bool(p.p_infect)
                {
                    self.compartment[i] = Compartment::Infected;
                    self.tau[i] = 0;
                }
            }
            self.tau[j] += 1;
        }

        for i in 0..n {
            if self.compartment[i] == Compartment::Infected && self.tau[i] >= p.t_infectious {
                self.compartment[i] = Compartment::Recovered;
            }
        }

        let domain = p.domain;
        for i in 0..n {
            let sigma = match self.compartment[i] {
                Compartment::Susceptible => p.diffusivity_s,
                Compartment::Infected => p.diffusivity_i,
                Compartment::Recovered => p.diffusivity_r,
            };
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).expect("positive diffusivity");
                for axis in 0..2 {
                    self.positions[i][axis] =
                        (self.positions[i][axis] + normal.sample(rng)).rem_euclid(domain);
                }
            }
        }
    }
}

/// Aggregate compartment densities, one triple per step.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySeries {
    pub frames: Vec<[f64; 3]>,
}

impl DensitySeries {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn as_state_frames(&self) -> Vec<Vec<f64>> {
        self.frames.iter().map(|f| f.to_vec()).collect()
    }
}

/// Run the agent model for `n_steps` iterations from a fresh random
/// population and record the post-step densities.
pub fn generate_sir_dataset(
    n_agents: usize,
    params: AbmParams,
    n_steps: usize,
    seed: u64,
) -> DensitySeries {
    assert!(n_steps >= 1, "need at least one step");
    let mut rng = StdRng::seed_from_u64(seed);
    let mut pop = AgentPopulation::init_random(n_agents, params, &mut rng);
    let mut frames = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        pop.step(&mut rng);
        frames.push(pop.densities());
    }
    DensitySeries { frames }
}
