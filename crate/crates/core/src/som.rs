//! Self-organizing maps on a hexagonal grid, multi-resolution clustering
//! sequences and latent-state mining.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomConfig {
    /// Schedule length of one epoch.
    pub iterations: usize,
    pub epochs: usize,
    pub initial_learning_rate: f64,
    /// Starting neighbourhood radius in grid steps; `sn / 2` when absent.
    #[serde(default)]
    pub initial_radius: Option<f64>,
    pub final_radius: f64,
}

impl Default for SomConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            epochs: 20,
            initial_learning_rate: 0.5,
            initial_radius: None,
            final_radius: 1.0,
        }
    }
}

/// Hexagonal (odd rows shifted right) step distance between two neurons.
pub fn hex_distance(sn: usize, a: usize, b: usize) -> usize {
    let cube = |j: usize| {
        let (row, col) = ((j / sn) as i64, (j % sn) as i64);
        let x = col - (row - (row & 1)) / 2;
        let z = row;
        (x, -x - z, z)
    };
    let (ax, ay, az) = cube(a);
    let (bx, by, bz) = cube(b);
    (ax - bx).abs().max((ay - by).abs()).max((az - bz).abs()) as usize
}

/// Unordered pairs of grid neighbours, `i < j`.
pub fn adjacent_pairs(sn: usize) -> Vec<(usize, usize)> {
    let n = sn * sn;
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if hex_distance(sn, i, j) == 1 {
                out.push((i, j));
            }
        }
    }
    out
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomModel {
    pub schema_version: u32,
    /// Grid side; the map has `sn * sn` neurons.
    pub sn: usize,
    pub weights: Vec<Vec<f64>>,
    pub config: SomConfig,
    pub seed: u64,
    pub hits: Vec<usize>,
    pub initial_qe: f64,
    pub final_qe: f64,
}

impl SomModel {
    /// Weights drawn uniformly inside the bounding box of `data`.
    pub fn init(data: &[Vec<f64>], sn: usize, config: SomConfig, seed: u64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("SOM training data has no rows".into()));
        }
        if sn == 0 {
            return Err(Error::Config("SOM grid side must be at least 1".into()));
        }
        let m = data[0].len();
        if let Some(r) = data.iter().find(|r| r.len() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: r.len(),
            });
        }
        let mut lo = vec![f64::INFINITY; m];
        let mut hi = vec![f64::NEG_INFINITY; m];
        for r in data {
            for k in 0..m {
                lo[k] = lo[k].min(r[k]);
                hi[k] = hi[k].max(r[k]);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..sn * sn)
            .map(|_| (0..m).map(|k| lo[k] + (hi[k] - lo[k]) * rng.random::<f64>()).collect())
            .collect();
        Ok(Self {
            schema_version: crate::SCHEMA_VERSION,
            sn,
            weights,
            config,
            seed,
            hits: vec![0; sn * sn],
            initial_qe: 0.0,
            final_qe: 0.0,
        })
    }

    pub fn n_neurons(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    /// Nearest neuron by Euclidean distance; ties to the lowest index.
    pub fn winner(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, w) in self.weights.iter().enumerate() {
            let d = dist2(x, w);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best
    }

    /// Moves neurons toward `x`, each weighted by a gaussian of its grid
    /// distance to `winner`. A radius of 0 updates the winner alone.
    pub fn update(&mut self, x: &[f64], winner: usize, eta: f64, radius: f64) {
        let sn = self.sn;
        for (j, w) in self.weights.iter_mut().enumerate() {
            let g = hex_distance(sn, winner, j) as f64;
            let h = if radius <= 0.0 {
                if g == 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (-(g * g) / (2.0 * radius * radius)).exp()
            };
            if h == 0.0 {
                continue;
            }
            for (wk, xk) in w.iter_mut().zip(x) {
                *wk += eta * h * (xk - *wk);
            }
        }
    }

    fn check_dim(&self, data: &[Vec<f64>]) -> Result<()> {
        match data.iter().find(|r| r.len() != self.dim()) {
            Some(r) => Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: r.len(),
            }),
            None => Ok(()),
        }
    }

    pub fn map(&self, data: &[Vec<f64>]) -> Result<Vec<usize>> {
        self.check_dim(data)?;
        Ok(data.iter().map(|x| self.winner(x)).collect())
    }

    /// Mean distance between each row and its winning neuron.
    pub fn quantization_error(&self, data: &[Vec<f64>]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        data.iter()
            .map(|x| dist2(x, &self.weights[self.winner(x)]).sqrt())
            .sum::<f64>()
            / data.len() as f64
    }

    /// Online training: learning rate decays linearly to zero and the
    /// neighbourhood radius shrinks linearly to `final_radius`.
    pub fn train(data: &[Vec<f64>], sn: usize, config: SomConfig, seed: u64) -> Result<Self> {
        if config.iterations == 0 || config.epochs == 0 {
            return Err(Error::Config("SOM iterations and epochs must be positive".into()));
        }
        if !(config.initial_learning_rate > 0.0 && config.initial_learning_rate < 1.0) {
            return Err(Error::Config("SOM learning rate must lie in (0, 1)".into()));
        }
        let mut som = Self::init(data, sn, config, seed)?;
        if data.len() < sn * sn {
            log::warn!("SOM {sn}x{sn} trained on only {} rows", data.len());
        }
        som.initial_qe = som.quantization_error(data);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
        let total = som.config.iterations * som.config.epochs;
        let r0 = som.config.initial_radius.unwrap_or(sn as f64 / 2.0);
        let r1 = som.config.final_radius;
        for step in 0..total {
            let frac = step as f64 / total as f64;
            let eta = som.config.initial_learning_rate * (1.0 - frac);
            let radius = r0 + (r1 - r0) * frac;
            let x = &data[rng.random_range(0..data.len())];
            let w = som.winner(x);
            som.update(x, w, eta, radius);
        }
        som.final_qe = som.quantization_error(data);
        som.record_hits(data)?;
        Ok(som)
    }

    pub fn record_hits(&mut self, data: &[Vec<f64>]) -> Result<()> {
        let labels = self.map(data)?;
        self.hits = vec![0; self.n_neurons()];
        for l in labels {
            self.hits[l] += 1;
        }
        Ok(())
    }

    /// Weight distance of every pair of grid neighbours.
    pub fn u_matrix(&self) -> Vec<(usize, usize, f64)> {
        adjacent_pairs(self.sn)
            .into_iter()
            .map(|(i, j)| (i, j, dist2(&self.weights[i], &self.weights[j]).sqrt()))
            .collect()
    }
}

/// Winning-neuron labels of every sample at grid sides `sn`, `sn+1`, `sn+2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSequenceSet {
    pub grids: [usize; 3],
    pub labels: Vec<[usize; 3]>,
}

impl ClusterSequenceSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Trains the three maps (seeds derived from `seed`) and records label triples.
pub fn cluster_sequences(
    data: &[Vec<f64>],
    sn: usize,
    config: &SomConfig,
    seed: u64,
) -> Result<(ClusterSequenceSet, Vec<SomModel>)> {
    let grids = [sn, sn + 1, sn + 2];
    let mut models = Vec::with_capacity(3);
    let mut per_grid = Vec::with_capacity(3);
    for (g, &side) in grids.iter().enumerate() {
        let som = SomModel::train(data, side, config.clone(), derive_seed(seed, 100 + g as u64))?;
        per_grid.push(som.map(data)?);
        models.push(som);
    }
    let labels = (0..data.len())
        .map(|i| [per_grid[0][i], per_grid[1][i], per_grid[2][i]])
        .collect();
    Ok((ClusterSequenceSet { grids, labels }, models))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    /// Neighbouring retained neurons closer than this percentile of all
    /// neighbour distances on the grid are merged.
    pub merge_percentile: f64,
    /// Discard states smaller than the finest grid's hit threshold.
    pub drop_small_states: bool,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            merge_percentile: 25.0,
            drop_small_states: true,
        }
    }
}

/// Linear-interpolation percentile of `values` (`p` in 0..=100).
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    if v.is_empty() {
        return f64::NAN;
    }
    let rank = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeGroup {
    pub grid: usize,
    pub representative: usize,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    pub id: String,
    /// Row indices into the mined dataset.
    pub members: Vec<usize>,
    /// Majority grid-1 neuron followed by the merged grid-2 and grid-3 labels
    /// shared by all members.
    pub sequence: [usize; 3],
    /// Neurons merged into the second and third labels.
    pub merged_neurons: [Vec<usize>; 2],
}

impl LatentState {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateStateSet {
    pub states: Vec<LatentState>,
    /// States matched to normal operation and removed.
    pub removed_normal: Vec<LatentState>,
    /// States too small to keep.
    pub discarded_small: Vec<LatentState>,
    /// Sample counts: input, after each hit filter, after dropping small
    /// states, after normal removal.
    pub survivors: Vec<usize>,
    pub thresholds: [f64; 3],
    pub retained_neurons: [Vec<usize>; 3],
    pub merges: Vec<MergeGroup>,
}

impl CandidateStateSet {
    pub fn total(&self) -> usize {
        self.states.iter().map(LatentState::len).sum()
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Merges neighbouring retained neurons whose weights are closer than the
/// percentile threshold; returns neuron -> representative (most hits).
fn merge_map(model: &SomModel, retained: &[usize], hits: &[usize], pct: f64) -> (Vec<usize>, Vec<MergeGroup>) {
    let n = model.n_neurons();
    let um = model.u_matrix();
    let dists: Vec<f64> = um.iter().map(|e| e.2).collect();
    let thr = percentile(&dists, pct);
    let keep: Vec<bool> = (0..n).map(|j| retained.contains(&j)).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    for &(i, j, d) in &um {
        if keep[i] && keep[j] && d < thr {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for j in 0..n {
        let r = find(&mut parent, j);
        comps.entry(r).or_default().push(j);
    }
    let mut map: Vec<usize> = (0..n).collect();
    let mut groups = Vec::new();
    for members in comps.values() {
        let rep = *members
            .iter()
            .max_by(|&&a, &&b| hits[a].cmp(&hits[b]).then(b.cmp(&a)))
            .unwrap();
        for &j in members {
            map[j] = rep;
        }
        if members.len() > 1 {
            groups.push(MergeGroup {
                grid: model.sn,
                representative: rep,
                members: members.clone(),
            });
        }
    }
    (map, groups)
}

/// Hit-count filtering at the three resolutions, neighbour merging on the two
/// finer grids, grouping by the merged finer labels, and removal of states that
/// `is_normal` recognises as normal operation.
pub fn mine_latent_states(
    seqs: &ClusterSequenceSet,
    models: &[SomModel],
    cfg: &MiningConfig,
    is_normal: &mut dyn FnMut(&[usize]) -> Result<bool>,
) -> Result<CandidateStateSet> {
    if models.len() != 3 {
        return Err(Error::Config("latent-state mining needs the three grid models".into()));
    }
    for (g, m) in models.iter().enumerate() {
        if m.sn != seqs.grids[g] {
            return Err(Error::Config(format!(
                "model {g} has grid {} but the sequences were built with {}",
                m.sn, seqs.grids[g]
            )));
        }
    }
    let total = seqs.len();
    if total == 0 {
        return Err(Error::Empty("no clustering sequences".into()));
    }
    let mut hits = [Vec::new(), Vec::new(), Vec::new()];
    let mut thresholds = [0.0; 3];
    let mut retained: [Vec<usize>; 3] = Default::default();
    for g in 0..3 {
        let n = seqs.grids[g] * seqs.grids[g];
        hits[g] = vec![0usize; n];
        for l in &seqs.labels {
            hits[g][l[g]] += 1;
        }
        thresholds[g] = total as f64 / n as f64;
        retained[g] = (0..n).filter(|&j| hits[g][j] as f64 >= thresholds[g]).collect();
    }

    let mut survivors = vec![total];
    let mut current: Vec<usize> = (0..total).collect();
    for g in 0..3 {
        current.retain(|&i| retained[g].contains(&seqs.labels[i][g]));
        survivors.push(current.len());
    }
    if current.is_empty() {
        return Err(Error::MiningExhausted { survivors });
    }

    let (map3, mut merges) = merge_map(&models[2], &retained[2], &hits[2], cfg.merge_percentile);
    let (map2, merges2) = merge_map(&models[1], &retained[1], &hits[1], cfg.merge_percentile);
    merges.extend(merges2);

    // Grid 1 is never merged, so a cluster split across two grid-1 neurons
    // would otherwise become two states. States are keyed by the merged finer
    // labels and report the most common grid-1 neuron (ties to the lowest).
    let mut by_fine: BTreeMap<[usize; 2], Vec<usize>> = BTreeMap::new();
    for &i in &current {
        let [_, b, c] = seqs.labels[i];
        by_fine.entry([map2[b], map3[c]]).or_default().push(i);
    }
    let mut groups: BTreeMap<[usize; 3], Vec<usize>> = BTreeMap::new();
    for ([b, c], members) in by_fine {
        let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
        for &i in &members {
            *votes.entry(seqs.labels[i][0]).or_default() += 1;
        }
        let a = votes.iter().max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(x.0))).map(|(&a, _)| a).unwrap_or(0);
        groups.insert([a, b, c], members);
    }
    let members_of = |map: &[usize], rep: usize| -> Vec<usize> { (0..map.len()).filter(|&j| map[j] == rep).collect() };

    let mut states = Vec::new();
    let mut removed_normal = Vec::new();
    let mut discarded_small = Vec::new();
    let mut kept = 0;
    for (seq, members) in groups {
        let state = LatentState {
            id: String::new(),
            merged_neurons: [members_of(&map2, seq[1]), members_of(&map3, seq[2])],
            sequence: seq,
            members,
        };
        if cfg.drop_small_states && (state.len() as f64) < thresholds[2] {
            discarded_small.push(state);
            continue;
        }
        kept += state.len();
        if is_normal(&state.members)? {
            removed_normal.push(state);
        } else {
            states.push(state);
        }
    }
    for (k, s) in states.iter_mut().enumerate() {
        s.id = format!("S{}", k + 1);
    }
    for (k, s) in removed_normal.iter_mut().enumerate() {
        s.id = format!("N{}", k + 1);
    }
    for (k, s) in discarded_small.iter_mut().enumerate() {
        s.id = format!("X{}", k + 1);
    }
    survivors.push(kept);
    survivors.push(states.iter().map(LatentState::len).sum());
    if states.is_empty() {
        return Err(Error::MiningExhausted { survivors });
    }
    Ok(CandidateStateSet {
        states,
        removed_normal,
        discarded_small,
        survivors,
        thresholds,
        retained_neurons: retained,
        merges,
    })
}
