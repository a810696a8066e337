//! Permutation-partition hashing of the codeword universe `{0, …, N_C − 1}`
//! into `B` buckets of exactly `R = N_C / B` members.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codebook::parse_num;
use crate::error::{Error, Result};

/// SplitMix64 finalizer over a combined pair; used to derive independent seeds.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(31);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic stream for a derived seed.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A seeded family of equal-occupancy hash functions `h: U → {0, …, B−1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashFamily {
    pub universe_size: usize,
    pub bucket_count: usize,
    pub seed: u64,
}

impl HashFamily {
    pub fn new(universe_size: usize, bucket_count: usize, seed: u64) -> Result<Self> {
        if bucket_count == 0 || universe_size == 0 || !universe_size.is_multiple_of(bucket_count) {
            return Err(Error::IndivisibleUniverse { universe: universe_size, buckets: bucket_count });
        }
        Ok(Self { universe_size, bucket_count, seed })
    }

    /// Members per bucket, `R`.
    pub fn bucket_size(&self) -> usize {
        self.universe_size / self.bucket_count
    }

    /// Independent family for base station `k`.
    pub fn for_station(&self, k: usize) -> Self {
        Self { seed: mix(self.seed, 0x5354_4154_0000_0000 | k as u64), ..*self }
    }

    pub fn draw(&self, round: u64) -> BucketTable {
        draw_hash(self, round)
    }
}

/// One round's partition `D`: row `b` lists the members of bucket `b`, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketTable {
    buckets: Vec<Vec<usize>>,
    assignment: Vec<usize>,
    pub round_id: u64,
}

impl BucketTable {
    /// Bucket `b` receives `{x : ⌊perm[x] / R⌋ = b}`.
    pub fn from_permutation(perm: &[usize], bucket_count: usize, round_id: u64) -> Result<Self> {
        let n = perm.len();
        if bucket_count == 0 || n == 0 || !n.is_multiple_of(bucket_count) {
            return Err(Error::IndivisibleUniverse { universe: n, buckets: bucket_count });
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Precondition(format!("not a permutation of 0..{n}")));
            }
        }
        let r = n / bucket_count;
        let mut buckets = vec![Vec::with_capacity(r); bucket_count];
        let mut assignment = vec![0; n];
        // x ascending, so every row comes out sorted.
        for (x, &p) in perm.iter().enumerate() {
            let b = p / r;
            buckets[b].push(x);
            assignment[x] = b;
        }
        Ok(Self { buckets, assignment, round_id })
    }

    /// Contiguous blocks `{0..R−1}, {R..2R−1}, …`.
    pub fn blocks(universe_size: usize, bucket_count: usize, round_id: u64) -> Result<Self> {
        let perm: Vec<usize> = (0..universe_size).collect();
        Self::from_permutation(&perm, bucket_count, round_id)
    }

    /// Residue classes `{x : x mod B = b}`.
    pub fn residues(universe_size: usize, bucket_count: usize, round_id: u64) -> Result<Self> {
        if bucket_count == 0 || !universe_size.is_multiple_of(bucket_count) {
            return Err(Error::IndivisibleUniverse { universe: universe_size, buckets: bucket_count });
        }
        let r = universe_size / bucket_count;
        let perm: Vec<usize> = (0..universe_size).map(|x| (x % bucket_count) * r + x / bucket_count).collect();
        Self::from_permutation(&perm, bucket_count, round_id)
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn bucket_size(&self) -> usize {
        self.buckets[0].len()
    }

    pub fn universe_size(&self) -> usize {
        self.assignment.len()
    }

    pub fn bucket(&self, b: usize) -> &[usize] {
        &self.buckets[b]
    }

    pub fn buckets(&self) -> &[Vec<usize>] {
        &self.buckets
    }

    /// `h(x)`.
    pub fn bucket_of(&self, x: usize) -> usize {
        self.assignment[x]
    }

    /// `round <id>` followed by one line of member indices per bucket.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "round {} buckets {} size {}", self.round_id, self.bucket_count(), self.bucket_size());
        for row in &self.buckets {
            let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let head = lines.next().ok_or_else(|| Error::Format("empty bucket table".into()))?;
        let f: Vec<&str> = head.split_whitespace().collect();
        if f.len() != 6 || f[0] != "round" || f[2] != "buckets" || f[4] != "size" {
            return Err(Error::Format(format!("bad bucket table header '{head}'")));
        }
        let round_id: u64 = parse_num(f[1])?;
        let b: usize = parse_num(f[3])?;
        let r: usize = parse_num(f[5])?;
        let mut perm = vec![usize::MAX; b * r];
        for bucket in 0..b {
            let line = lines.next().ok_or_else(|| Error::Format("truncated bucket table".into()))?;
            let members: Vec<usize> = line.split_whitespace().map(parse_num).collect::<Result<_>>()?;
            if members.len() != r {
                return Err(Error::Format(format!("bucket {bucket} has {} members, expected {r}", members.len())));
            }
            for (slot, &x) in members.iter().enumerate() {
                if x >= perm.len() {
                    return Err(Error::Format(format!("member {x} outside universe")));
                }
                perm[x] = bucket * r + slot;
            }
        }
        Self::from_permutation(&perm, b, round_id)
    }
}

/// Draws the round-`round` partition: a uniformly random permutation from a
/// ChaCha stream keyed on `(seed, round)`, cut into contiguous blocks.
pub fn draw_hash(family: &HashFamily, round: u64) -> BucketTable {
    let perm = random_permutation(family.universe_size, mix(family.seed, round));
    BucketTable::from_permutation(&perm, family.bucket_count, round).expect("family invariants guarantee a valid partition")
}

fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

/// Fraction of `trials` rounds in which `x1` and `x2` share a bucket.
pub fn collision_rate(family: &HashFamily, x1: usize, x2: usize, trials: u64) -> Result<f64> {
    if x1 == x2 {
        return Err(Error::Precondition("collision rate needs two distinct keys".into()));
    }
    if x1 >= family.universe_size || x2 >= family.universe_size {
        return Err(Error::Precondition("keys outside the universe".into()));
    }
    if trials == 0 {
        return Err(Error::Precondition("collision rate needs at least one trial".into()));
    }
    let r = family.bucket_size();
    let mut hits = 0u64;
    for round in 0..trials {
        let perm = random_permutation(family.universe_size, mix(family.seed, round));
        if perm[x1] / r == perm[x2] / r {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// Exact pairwise collision probability of an equal-occupancy partition, `(R − 1)/(N_C − 1)`.
pub fn exact_collision_probability(universe_size: usize, bucket_count: usize) -> f64 {
    let r = (universe_size / bucket_count) as f64;
    (r - 1.0) / (universe_size as f64 - 1.0)
}
