//! P×K mini-batch plans for one epoch.
//!
//! Every strategy yields `⌈Z/P⌉` batches of `P·K` instance indices, so runs
//! that differ only in sampling take the same number of optimizer steps.

use std::collections::VecDeque;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::RandomSeed;
use crate::error::{invalid, Result};
use crate::proxy::ProxyLabeling;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    /// P camera-aware proxies per batch, K instances each.
    ProxyBalanced,
    /// P camera-agnostic clusters per batch, K instances each.
    ClassBalanced,
    /// P·K clustered instances, uniformly.
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub strategy: SamplingStrategy,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "K")]
    pub k: usize,
    /// Instance indices, one list per batch.
    pub batches: Vec<Vec<usize>>,
    /// Proxies (or clusters) drawn for each batch; empty lists under `random`.
    pub groups: Vec<Vec<usize>>,
}

impl BatchPlan {
    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    /// How many times each of `n` groups was drawn over the epoch.
    pub fn group_usage(&self, n: usize) -> Vec<usize> {
        let mut counts = vec![0; n];
        for &g in self.groups.iter().flatten() {
            counts[g] += 1;
        }
        counts
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }
}

pub fn plan_epoch(
    labeling: &ProxyLabeling,
    p: usize,
    k: usize,
    strategy: SamplingStrategy,
    seed: RandomSeed,
) -> Result<BatchPlan> {
    if p == 0 || k == 0 {
        return Err(invalid(format!("P = {p} and K = {k} must both be positive")));
    }
    let z = labeling.num_proxies();
    let num_batches = z.div_ceil(p);
    let mut rng = seed.rng();

    let (batches, groups) = match strategy {
        SamplingStrategy::ProxyBalanced => {
            if p > z {
                return Err(invalid(format!("P = {p} exceeds the {z} proxies")));
            }
            let pools: Vec<Vec<usize>> = (0..z).map(|j| labeling.members(j).to_vec()).collect();
            grouped_batches(&pools, p, k, num_batches, &mut rng)
        }
        SamplingStrategy::ClassBalanced => {
            let y = labeling.num_clusters();
            if p > y {
                return Err(invalid(format!("P = {p} exceeds the {y} clusters")));
            }
            let pools: Vec<Vec<usize>> = (0..y)
                .map(|c| {
                    let mut m: Vec<usize> = labeling
                        .proxies_of_cluster(c)
                        .iter()
                        .flat_map(|&j| labeling.members(j).iter().copied())
                        .collect();
                    m.sort_unstable();
                    m
                })
                .collect();
            grouped_batches(&pools, p, k, num_batches, &mut rng)
        }
        SamplingStrategy::Random => {
            let clustered: Vec<usize> = (0..labeling.num_instances())
                .filter(|&i| labeling.proxy_of(i).is_some())
                .collect();
            if clustered.is_empty() {
                return Err(invalid("no clustered instances to sample"));
            }
            let mut pool = InstancePool::new(clustered);
            let batches = (0..num_batches).map(|_| pool.draw(p * k, &mut rng)).collect();
            (batches, vec![Vec::new(); num_batches])
        }
    };
    Ok(BatchPlan {
        strategy,
        p,
        k,
        batches,
        groups,
    })
}

fn grouped_batches(
    pools: &[Vec<usize>],
    p: usize,
    k: usize,
    num_batches: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut cycler = GroupCycler::new(pools.len());
    let mut state: Vec<InstancePool> = pools.iter().cloned().map(InstancePool::new).collect();
    let mut batches = Vec::with_capacity(num_batches);
    let mut groups = Vec::with_capacity(num_batches);
    for _ in 0..num_batches {
        let chosen = cycler.next_batch(p, rng);
        let batch = chosen.iter().flat_map(|&g| state[g].draw(k, rng)).collect();
        batches.push(batch);
        groups.push(chosen);
    }
    (batches, groups)
}

/// Walks concatenated random permutations of `0..n`, handing out `p`
/// distinct groups per batch. A group that would repeat inside one batch is
/// deferred to the next batch rather than dropped, which keeps per-epoch
/// usage counts within one of each other.
struct GroupCycler {
    n: usize,
    queue: VecDeque<usize>,
}

impl GroupCycler {
    fn new(n: usize) -> Self {
        Self {
            n,
            queue: VecDeque::new(),
        }
    }

    fn next_batch(&mut self, p: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut chosen = Vec::with_capacity(p);
        let mut deferred = Vec::new();
        while chosen.len() < p {
            if self.queue.is_empty() {
                let mut perm: Vec<usize> = (0..self.n).collect();
                perm.shuffle(rng);
                self.queue.extend(perm);
            }
            let g = self.queue.pop_front().expect("queue refilled");
            if chosen.contains(&g) {
                deferred.push(g);
            } else {
                chosen.push(g);
            }
        }
        for g in deferred.into_iter().rev() {
            self.queue.push_front(g);
        }
        chosen
    }
}

/// Shuffled members drawn without replacement; once exhausted, further
/// draws are uniform with replacement.
struct InstancePool {
    members: Vec<usize>,
    order: Vec<usize>,
    cursor: usize,
    shuffled: bool,
}

impl InstancePool {
    fn new(members: Vec<usize>) -> Self {
        Self {
            order: members.clone(),
            members,
            cursor: 0,
            shuffled: false,
        }
    }

    fn draw(&mut self, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        if !self.shuffled {
            self.order.shuffle(rng);
            self.shuffled = true;
        }
        (0..count)
            .map(|_| {
                if self.cursor < self.order.len() {
                    self.cursor += 1;
                    self.order[self.cursor - 1]
                } else {
                    self.members[rng.random_range(0..self.members.len())]
                }
            })
            .collect()
    }
}
