//! Held-out evaluation seeds and the training seed stream.
//!
//! Disjointness is structural: every test seed is odd, every training
//! seed is even, so no training run can touch an evaluation layout.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::TaskKind;

pub const TEST_SEED_COUNT: usize = 1000;

/// Master seed the per-task evaluation lists are derived from. Changing
/// it invalidates every shipped seed file and recorded result.
const TEST_MASTER_SEED: u64 = 0x7e57_5eed_2024_0001;

/// The fixed 1000-seed evaluation list for a task. Same list on every
/// call; shipped to disk via `write_seed_file`.
pub fn test_seeds(task: TaskKind) -> Vec<u64> {
    let stream = match task {
        TaskKind::SimpleDoorKey => 1,
        TaskKind::LavaDoorKey => 2,
        TaskKind::ColoredDoorKey => 3,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(TEST_MASTER_SEED, stream));
    let mut taken = HashSet::with_capacity(TEST_SEED_COUNT);
    let mut seeds = Vec::with_capacity(TEST_SEED_COUNT);
    while seeds.len() < TEST_SEED_COUNT {
        let seed = rng.gen::<u64>() | 1;
        if taken.insert(seed) {
            seeds.push(seed);
        }
    }
    seeds
}

/// Maps a training stream index to its environment seed (always even).
pub fn training_seed(index: u64) -> u64 {
    index << 1
}

/// Writes one seed per line in decimal.
pub fn write_seed_file(task: TaskKind, path: &Path) -> std::io::Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for seed in test_seeds(task) {
        writeln!(file, "{seed}")?;
    }
    file.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_are_fixed_and_full_length() {
        for task in TaskKind::ALL {
            let a = test_seeds(task);
            assert_eq!(a.len(), TEST_SEED_COUNT);
            assert_eq!(a, test_seeds(task));
        }
    }

    #[test]
    fn test_and_training_streams_are_disjoint() {
        for task in TaskKind::ALL {
            assert!(test_seeds(task).iter().all(|s| s % 2 == 1));
        }
        assert!((0..1_000_000u64).map(training_seed).all(|s| s % 2 == 0));
    }

    #[test]
    fn seed_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seeds.txt");
        write_seed_file(TaskKind::SimpleDoorKey, &path).unwrap();
        let read: Vec<u64> = std::fs::read_to_string(&path)
            .unwrap()
            .lines()
            .map(|l| l.parse().unwrap())
            .collect();
        assert_eq!(read, test_seeds(TaskKind::SimpleDoorKey));
    }
}
