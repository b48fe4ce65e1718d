use dvt_bench::{desk_attention, grid};
use dvt_core::analysis::bench_attention;
use dvt_core::attention::Scheme;

// Sites grow 4x per step so the expected cost gap dwarfs timer noise.
#[test]
fn medians_grow_with_sites() {
    for scheme in Scheme::ALL {
        let cfg = desk_attention(scheme);
        let medians: Vec<f64> = [2, 4, 8]
            .into_iter()
            .map(|side| bench_attention(&cfg, grid(4, side), 16, 2, 20, 0).unwrap().stats.median)
            .collect();
        assert!(medians.windows(2).all(|w| w[0] <= w[1]), "{scheme}: {medians:?}");
    }
}

#[test]
fn report_has_derived_throughput() {
    let r = bench_attention(&desk_attention(Scheme::Dsta), grid(4, 4), 16, 1, 20, 0).unwrap();
    assert!(r.stats.reps >= 20 && r.stats.p95 >= r.stats.median);
    assert!(r.macs_per_sec() > 0.0);
    assert!(r.to_block().contains("scheme = dsta"));
}
