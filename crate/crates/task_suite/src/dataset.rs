//! The offline dataset container, its binary file format, and seeded
//! generation of the standard flavors from the scripted behavior policies.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::registry::make_env;
use crate::types::{Environment, TaskError, Transition};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    Random,
    Medium,
    Expert,
    MediumReplay,
    MediumExpert,
    Cloned,
}

impl Flavor {
    pub fn parse(s: &str) -> Result<Flavor, TaskError> {
        match s {
            "random" => Ok(Flavor::Random),
            "medium" => Ok(Flavor::Medium),
            "expert" => Ok(Flavor::Expert),
            "medium-replay" => Ok(Flavor::MediumReplay),
            "medium-expert" => Ok(Flavor::MediumExpert),
            "cloned" => Ok(Flavor::Cloned),
            other => Err(TaskError::UnknownFlavor(other.to_string())),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Flavor::Random => "random",
            Flavor::Medium => "medium",
            Flavor::Expert => "expert",
            Flavor::MediumReplay => "medium-replay",
            Flavor::MediumExpert => "medium-expert",
            Flavor::Cloned => "cloned",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetMeta {
    pub schema_version: u32,
    pub task: String,
    pub flavor: String,
    pub seed: u64,
    pub num_transitions: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
}

/// Flat transition arrays in the D4RL-style schema. Episode boundaries are
/// derivable from `terminals | timeouts`.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    pub meta: DatasetMeta,
    pub observations: Vec<f32>,
    pub actions: Vec<f32>,
    pub rewards: Vec<f32>,
    pub next_observations: Vec<f32>,
    pub terminals: Vec<u8>,
    pub timeouts: Vec<u8>,
}

impl OfflineDataset {
    pub fn empty(meta: DatasetMeta) -> OfflineDataset {
        OfflineDataset {
            meta,
            observations: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_observations: Vec::new(),
            terminals: Vec::new(),
            timeouts: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.meta.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.meta.act_dim
    }

    pub fn push(&mut self, t: &Transition) {
        debug_assert_eq!(t.observation.len(), self.meta.obs_dim);
        debug_assert_eq!(t.action.len(), self.meta.act_dim);
        debug_assert!(!(t.terminal && t.timeout), "terminal and timeout are exclusive");
        self.observations.extend_from_slice(&t.observation);
        self.actions.extend_from_slice(&t.action);
        self.rewards.push(t.reward);
        self.next_observations.extend_from_slice(&t.next_observation);
        self.terminals.push(t.terminal as u8);
        self.timeouts.push(t.timeout as u8);
        self.meta.num_transitions = self.len();
    }

    pub fn observation(&self, i: usize) -> &[f32] {
        let d = self.meta.obs_dim;
        &self.observations[i * d..(i + 1) * d]
    }

    pub fn action(&self, i: usize) -> &[f32] {
        let d = self.meta.act_dim;
        &self.actions[i * d..(i + 1) * d]
    }

    pub fn next_observation(&self, i: usize) -> &[f32] {
        let d = self.meta.obs_dim;
        &self.next_observations[i * d..(i + 1) * d]
    }

    pub fn transition(&self, i: usize) -> Transition {
        Transition {
            observation: self.observation(i).to_vec(),
            action: self.action(i).to_vec(),
            reward: self.rewards[i],
            next_observation: self.next_observation(i).to_vec(),
            terminal: self.terminals[i] != 0,
            timeout: self.timeouts[i] != 0,
        }
    }

    /// Half-open [start, end) index ranges split after terminal|timeout.
    /// A trailing run without a closing flag still counts as an episode.
    pub fn episode_bounds(&self) -> Vec<(usize, usize)> {
        let mut bounds = Vec::new();
        let mut start = 0usize;
        for i in 0..self.len() {
            if self.terminals[i] != 0 || self.timeouts[i] != 0 {
                bounds.push((start, i + 1));
                start = i + 1;
            }
        }
        if start < self.len() {
            bounds.push((start, self.len()));
        }
        bounds
    }

    /// Appends all transitions of `other`; dims must match.
    pub fn concat(&mut self, other: &OfflineDataset) {
        assert_eq!(self.meta.obs_dim, other.meta.obs_dim);
        assert_eq!(self.meta.act_dim, other.meta.act_dim);
        self.observations.extend_from_slice(&other.observations);
        self.actions.extend_from_slice(&other.actions);
        self.rewards.extend_from_slice(&other.rewards);
        self.next_observations.extend_from_slice(&other.next_observations);
        self.terminals.extend_from_slice(&other.terminals);
        self.timeouts.extend_from_slice(&other.timeouts);
        self.meta.num_transitions = self.len();
    }

    /// Truncates to exactly `n` transitions; a cut tail is closed with a
    /// timeout flag so episode parsing stays clean.
    pub fn truncate(&mut self, n: usize) {
        if n >= self.len() {
            return;
        }
        let od = self.meta.obs_dim;
        let ad = self.meta.act_dim;
        self.observations.truncate(n * od);
        self.actions.truncate(n * ad);
        self.rewards.truncate(n);
        self.next_observations.truncate(n * od);
        self.terminals.truncate(n);
        self.timeouts.truncate(n);
        if n > 0 && self.terminals[n - 1] == 0 {
            self.timeouts[n - 1] = 1;
        }
        self.meta.num_transitions = n;
    }

    pub fn write_file(&self, path: &Path) -> Result<(), TaskError> {
        #[derive(Serialize)]
        struct ArrayDesc<'a> {
            name: &'a str,
            dtype: &'a str,
            offset: usize,
            len: usize,
        }
        #[derive(Serialize)]
        struct FileHeader<'a> {
            #[serde(flatten)]
            meta: &'a DatasetMeta,
            arrays: Vec<ArrayDesc<'a>>,
        }

        let n = self.len();
        let od = self.meta.obs_dim;
        let ad = self.meta.act_dim;
        let mut offset = 0usize;
        let mut arrays = Vec::new();
        for (name, dtype, len) in [
            ("observations", "f32", n * od),
            ("actions", "f32", n * ad),
            ("rewards", "f32", n),
            ("next_observations", "f32", n * od),
            ("terminals", "u8", n),
            ("timeouts", "u8", n),
        ] {
            arrays.push(ArrayDesc { name, dtype, offset, len });
            offset += len * if dtype == "f32" { 4 } else { 1 };
        }
        let header = serde_json::to_vec(&FileHeader { meta: &self.meta, arrays })
            .expect("header serializes");

        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for arr in [&self.observations, &self.actions, &self.rewards, &self.next_observations] {
            for v in arr.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.write_all(&self.terminals)?;
        w.write_all(&self.timeouts)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<OfflineDataset, TaskError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut len_buf = [0u8; 8];
        r.read_exact(&mut len_buf)?;
        let header_len = u64::from_le_bytes(len_buf) as usize;
        let mut header_bytes = vec![0u8; header_len];
        r.read_exact(&mut header_bytes)?;
        let header: serde_json::Value = serde_json::from_slice(&header_bytes)
            .map_err(|e| TaskError::Format(e.to_string()))?;
        let meta: DatasetMeta = serde_json::from_value(header.clone())
            .map_err(|e| TaskError::Format(format!("bad metadata: {e}")))?;
        if meta.schema_version != SCHEMA_VERSION {
            return Err(TaskError::Format(format!("unsupported schema version {}", meta.schema_version)));
        }
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;

        let read_f32 = |offset: usize, len: usize| -> Result<Vec<f32>, TaskError> {
            let bytes = len * 4;
            if offset + bytes > payload.len() {
                return Err(TaskError::Format("payload truncated".into()));
            }
            Ok(payload[offset..offset + bytes]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect())
        };
        let arrays = header["arrays"].as_array().ok_or_else(|| TaskError::Format("missing arrays".into()))?;
        let locate = |name: &str| -> Result<(usize, usize), TaskError> {
            arrays
                .iter()
                .find(|a| a["name"] == name)
                .map(|a| (a["offset"].as_u64().unwrap() as usize, a["len"].as_u64().unwrap() as usize))
                .ok_or_else(|| TaskError::Format(format!("missing array {name}")))
        };

        let (o, l) = locate("observations")?;
        let observations = read_f32(o, l)?;
        let (o, l) = locate("actions")?;
        let actions = read_f32(o, l)?;
        let (o, l) = locate("rewards")?;
        let rewards = read_f32(o, l)?;
        let (o, l) = locate("next_observations")?;
        let next_observations = read_f32(o, l)?;
        let (o, l) = locate("terminals")?;
        if o + l > payload.len() {
            return Err(TaskError::Format("payload truncated".into()));
        }
        let terminals = payload[o..o + l].to_vec();
        let (o, l) = locate("timeouts")?;
        if o + l > payload.len() {
            return Err(TaskError::Format("payload truncated".into()));
        }
        let timeouts = payload[o..o + l].to_vec();

        Ok(OfflineDataset { meta, observations, actions, rewards, next_observations, terminals, timeouts })
    }
}

fn derive_seed(task: &str, flavor: &str, seed: u64, salt: u64) -> u64 {
    // FNV-1a over the identifying tuple; stable across platforms.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in task.bytes().chain(flavor.bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h ^= seed;
    h = h.wrapping_mul(0x1000_0000_01b3);
    h ^= salt;
    h.wrapping_mul(0x1000_0000_01b3)
}

enum Behavior {
    Random,
    Expert,
    /// Expert with Gaussian action noise and a fraction of uniform steps.
    Noisy { sigma: f32, p_random: f32 },
    /// Competence annealed from fully random toward `Noisy(0.3, 0.2)`.
    Improving,
}

fn rollout_into(
    ds: &mut OfflineDataset,
    env: &mut dyn Environment,
    behavior: &Behavior,
    target: usize,
    rng: &mut ChaCha8Rng,
    env_seed_base: u64,
) {
    let act_dim = env.spec().act_dim;
    let mut episode = 0u64;
    while ds.len() < target {
        let mut obs = env.reset(env_seed_base.wrapping_add(episode));
        episode += 1;
        let progress_denom = target.max(1) as f32;
        loop {
            let frac = (ds.len() as f32 / progress_denom).min(1.0);
            let action = match behavior {
                Behavior::Random => crate::random_policy(rng, act_dim),
                Behavior::Expert => env.expert_action(),
                Behavior::Noisy { sigma, p_random } => {
                    if rng.gen::<f32>() < *p_random {
                        crate::random_policy(rng, act_dim)
                    } else {
                        let mut a = env.expert_action();
                        for v in &mut a {
                            *v = (*v + gaussian(rng) * sigma).clamp(-1.0, 1.0);
                        }
                        a
                    }
                }
                Behavior::Improving => {
                    let p_random = 1.0 - 0.8 * frac;
                    if rng.gen::<f32>() < p_random {
                        crate::random_policy(rng, act_dim)
                    } else {
                        let mut a = env.expert_action();
                        for v in &mut a {
                            *v = (*v + gaussian(rng) * 0.3).clamp(-1.0, 1.0);
                        }
                        a
                    }
                }
            };
            let step = env.step(&action).expect("generation stepped a finished episode");
            ds.push(&Transition {
                observation: obs,
                action,
                reward: step.reward,
                next_observation: step.obs.clone(),
                terminal: step.terminal,
                timeout: step.timeout,
            });
            if step.terminal || step.timeout || ds.len() >= target {
                break;
            }
            obs = step.obs;
        }
    }
    ds.truncate(target);
}

fn gaussian(rng: &mut ChaCha8Rng) -> f32 {
    // Box-Muller; two uniforms per draw keeps the stream consumption fixed.
    let u1: f32 = rng.gen_range(1e-7f32..1.0);
    let u2: f32 = rng.gen::<f32>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f32::consts::PI * u2).cos()
}

/// Builds a dataset of exactly `transitions` steps for (task, flavor, seed).
/// The triple fully determines the bytes.
pub fn generate_dataset(
    task: &str,
    flavor: Flavor,
    transitions: usize,
    seed: u64,
) -> Result<OfflineDataset, TaskError> {
    let mut env = make_env(task)?;
    let spec = env.spec().clone();
    let meta = DatasetMeta {
        schema_version: SCHEMA_VERSION,
        task: task.to_string(),
        flavor: flavor.as_str().to_string(),
        seed,
        num_transitions: 0,
        obs_dim: spec.obs_dim,
        act_dim: spec.act_dim,
    };
    let mut ds = OfflineDataset::empty(meta);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(task, flavor.as_str(), seed, 1));
    let env_seed = derive_seed(task, flavor.as_str(), seed, 2);

    match flavor {
        Flavor::Random => rollout_into(&mut ds, env.as_mut(), &Behavior::Random, transitions, &mut rng, env_seed),
        Flavor::Expert => rollout_into(&mut ds, env.as_mut(), &Behavior::Expert, transitions, &mut rng, env_seed),
        Flavor::Medium => rollout_into(
            &mut ds,
            env.as_mut(),
            &Behavior::Noisy { sigma: 0.3, p_random: 0.2 },
            transitions,
            &mut rng,
            env_seed,
        ),
        Flavor::MediumReplay => {
            rollout_into(&mut ds, env.as_mut(), &Behavior::Improving, transitions, &mut rng, env_seed)
        }
        Flavor::MediumExpert => {
            let half = transitions / 2;
            let medium = generate_dataset(task, Flavor::Medium, half, seed)?;
            let expert = generate_dataset(task, Flavor::Expert, transitions - half, seed)?;
            ds.concat(&medium);
            ds.concat(&expert);
        }
        Flavor::Cloned => {
            let half = transitions / 2;
            let expert = generate_dataset(task, Flavor::Expert, half, seed)?;
            let random = generate_dataset(task, Flavor::Random, transitions - half, seed)?;
            ds.concat(&expert);
            ds.concat(&random);
        }
    }
    ds.meta.num_transitions = ds.len();
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_size_and_determinism() {
        let a = generate_dataset("swing", Flavor::Random, 700, 9).unwrap();
        let b = generate_dataset("swing", Flavor::Random, 700, 9).unwrap();
        assert_eq!(a.len(), 700);
        assert_eq!(a, b);
        let c = generate_dataset("swing", Flavor::Random, 700, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_flavor_action_mean_near_zero() {
        let ds = generate_dataset("pointmaze-u", Flavor::Random, 10_000, 0).unwrap();
        for dim in 0..ds.act_dim() {
            let mean: f64 = (0..ds.len()).map(|i| ds.action(i)[dim] as f64).sum::<f64>() / ds.len() as f64;
            assert!(mean.abs() < 0.05, "dim {dim} mean {mean}");
        }
    }

    #[test]
    fn medium_expert_is_concat_of_halves() {
        let me = generate_dataset("swing", Flavor::MediumExpert, 1000, 3).unwrap();
        let m = generate_dataset("swing", Flavor::Medium, 500, 3).unwrap();
        let e = generate_dataset("swing", Flavor::Expert, 500, 3).unwrap();
        assert_eq!(me.len(), 1000);
        assert_eq!(&me.rewards[..500], &m.rewards[..]);
        assert_eq!(&me.rewards[500..], &e.rewards[..]);
        assert_eq!(&me.actions[..m.actions.len()], &m.actions[..]);
    }

    #[test]
    fn file_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("swing.ds");
        let ds = generate_dataset("swing", Flavor::Medium, 512, 4).unwrap();
        ds.write_file(&path).unwrap();
        let back = OfflineDataset::read_file(&path).unwrap();
        assert_eq!(ds, back);
        // a second write produces identical bytes
        let path2 = dir.path().join("swing2.ds");
        back.write_file(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn episode_parsing_reconstructs_flat_arrays() {
        let ds = generate_dataset("pointmaze-u", Flavor::Medium, 2000, 5).unwrap();
        let bounds = ds.episode_bounds();
        assert!(!bounds.is_empty());
        let mut covered = 0usize;
        for (s, e) in &bounds {
            assert!(*e > *s);
            assert!(e - s <= ds.meta.num_transitions.min(task_horizon(&ds.meta.task)));
            covered += e - s;
        }
        assert_eq!(covered, ds.len());
        // no interior flags within an episode
        for (s, e) in &bounds {
            for i in *s..e - 1 {
                assert_eq!(ds.terminals[i] | ds.timeouts[i], 0);
            }
        }
    }

    fn task_horizon(task: &str) -> usize {
        crate::registry::task_spec(task).unwrap().horizon
    }

    #[test]
    fn terminal_and_timeout_never_both_set() {
        for flavor in [Flavor::Random, Flavor::Expert, Flavor::Medium] {
            let ds = generate_dataset("pointmaze-u", flavor, 1500, 2).unwrap();
            for i in 0..ds.len() {
                assert!(ds.terminals[i] == 0 || ds.timeouts[i] == 0);
            }
        }
    }

    #[test]
    fn unknown_flavor_is_reported() {
        assert!(matches!(Flavor::parse("mediun"), Err(TaskError::UnknownFlavor(_))));
    }
}
