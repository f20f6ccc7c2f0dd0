use apxlab_core::catalog::{lshape_corner, smooth_sine};
use apxlab_core::mesh::{l_shape, unit_square, Partition, Rule};
use apxlab_core::smoothness::{besov_seminorm, multilevel_seminorm, Region, SeminormValue, UniformChain};

fn corner_graded(rounds: usize) -> Partition {
    let mut p = Partition::initial(l_shape(Rule::Red)).uniform(3);
    for _ in 0..rounds {
        let marked: Vec<u32> = {
            let d = p.forest().read();
            p.active()
                .iter()
                .copied()
                .filter(|&e| d.coords(e).iter().any(|v| v[0].abs() < 1e-12 && v[1].abs() < 1e-12))
                .collect()
        };
        p = p.refine(&marked).unwrap();
    }
    p
}

fn truncated(s: &SeminormValue, j: usize) -> f64 {
    SeminormValue::from_detail(s.detail[..=j].to_vec(), s.q, s.surrogate).value
}

fn terms(s: &SeminormValue) -> Vec<f64> {
    s.detail.iter().map(|d| d.1).collect()
}

#[test]
fn corner_besov_stable_below_critical_smoothness() {
    let g = Region::on_partition(&corner_graded(9));
    let b = besov_seminorm(&lshape_corner(), 0.6, 2.0, 2.0, 2, 2.0, 9, &g, 7);
    assert!(b.warning.is_none());
    let drift = (truncated(&b, 9) - truncated(&b, 6)).abs() / truncated(&b, 9);
    assert!(drift < 1e-2, "drift {drift}");
    let t = terms(&b);
    assert!(t[3..].windows(2).all(|w| w[1] < 0.6 * w[0]), "{t:?}");
}

#[test]
fn corner_besov_grows_above_critical_smoothness() {
    let g = Region::on_partition(&corner_graded(9));
    let b = besov_seminorm(&lshape_corner(), 1.8, 2.0, 2.0, 2, 2.0, 9, &g, 7);
    let t = terms(&b);
    assert!(t[2..].windows(2).all(|w| w[1] > w[0]), "{t:?}");
    assert!(truncated(&b, 9) > 1.5 * truncated(&b, 5));
}

#[test]
fn smooth_multilevel_stable_in_depth() {
    let chain = UniformChain::new(&Partition::initial(unit_square(Rule::Red)), 1, 7);
    let s = multilevel_seminorm(&smooth_sine(), 1.5, 2.0, 2.0, &chain, None).unwrap();
    let drift = (truncated(&s, 7) - truncated(&s, 4)).abs() / truncated(&s, 7);
    assert!(drift < 0.05, "drift {drift}");
    let e = multilevel_seminorm(&smooth_sine(), 2.0, 2.0, 2.0, &chain, None).unwrap();
    let t = terms(&e);
    assert!((t[7] / t[6] - 1.0).abs() < 0.01, "{t:?}");
    assert!(truncated(&e, 7) > 1.2 * truncated(&e, 4));
}
