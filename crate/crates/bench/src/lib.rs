//! Fixtures shared by the benchmarks.

use apxlab_core::mesh::{l_shape, Partition, Rule};

/// L-shape partition refined toward the re-entrant corner for `rounds` rounds.
pub fn corner_partition(rule: Rule, rounds: usize) -> Partition {
    let mut p = Partition::initial(l_shape(rule)).uniform(2);
    for _ in 0..rounds {
        let marked: Vec<u32> = {
            let d = p.forest().read();
            p.active()
                .iter()
                .copied()
                .filter(|&e| d.coords(e).iter().any(|v| v[0].abs() < 0.3 && v[1].abs() < 0.3))
                .collect()
        };
        p = p.refine(&marked).expect("active ids");
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_grows() {
        assert!(corner_partition(Rule::Nvb, 3).len() > corner_partition(Rule::Nvb, 1).len());
    }
}
