use figs::synthetic::{generate, Block, Component, GenKind, GenSpec};
use proptest::prelude::*;

fn all_kinds() -> Vec<(GenKind, usize)> {
    vec![
        (GenKind::Toy, 3),
        (GenKind::Linear, 20),
        (GenKind::SingleInteraction, 8),
        (GenKind::PolySum, 15),
        (GenKind::Lss, 50),
        (GenKind::Friedman1, 10),
        (
            GenKind::BlockAdditive {
                blocks: vec![
                    Block { features: vec![0], component: Component::Sine { amplitude: 0.5, frequency: 1.0 } },
                    Block { features: vec![1, 2], component: Component::Product { coef: 2.0 } },
                ],
            },
            4,
        ),
        (GenKind::GroupedClassification, 6),
    ]
}

fn bits(spec: &GenSpec) -> Vec<u64> {
    let data = generate(spec).unwrap();
    data.dataset
        .rows()
        .flatten()
        .chain(data.dataset.targets())
        .chain(&data.noiseless)
        .map(|v| v.to_bits())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn same_seed_gives_identical_bits(seed in any::<u64>(), n in 1usize..120, noise in 0.0..2.0f64) {
        for (kind, d) in all_kinds() {
            let spec = GenSpec::new(kind, n, d, noise, seed);
            prop_assert_eq!(bits(&spec), bits(&spec));
            prop_assert_eq!(generate(&spec).unwrap().groups, generate(&spec).unwrap().groups);
        }
    }

    #[test]
    fn features_stay_in_the_domain(seed in any::<u64>(), n in 1usize..200) {
        for (kind, d) in all_kinds() {
            let lo = if matches!(kind, GenKind::Toy) { -1.0 } else { 0.0 };
            let data = generate(&GenSpec::new(kind, n, d, 0.0, seed)).unwrap();
            prop_assert_eq!(data.dataset.n_samples(), n);
            prop_assert_eq!(data.dataset.n_features(), d);
            prop_assert!(data.dataset.rows().flatten().all(|&v| (lo..=1.0).contains(&v)));
        }
    }
}

#[test]
fn linear_moments_match_sum_of_uniforms() {
    let data = generate(&GenSpec::new(GenKind::Linear, 100_000, 20, 0.0, 2024)).unwrap();
    let f = &data.noiseless;
    let n = f.len() as f64;
    let mean = f.iter().sum::<f64>() / n;
    let var = f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((mean - 10.0).abs() <= 0.01 * 10.0, "mean {mean}");
    assert!((var - 20.0 / 12.0).abs() <= 0.01 * 20.0 / 12.0, "variance {var}");
}

#[test]
fn toy_blocks_cover_every_sign_pattern() {
    let data = generate(&GenSpec::new(GenKind::Toy, 800, 5, 0.0, 6)).unwrap();
    let rows: Vec<&[f64]> = data.dataset.rows().collect();
    for block in rows.chunks(8) {
        let mut patterns: Vec<u8> = block
            .iter()
            .map(|r| (0..3).fold(0u8, |acc, j| acc | (u8::from(r[j] > 0.0) << j)))
            .collect();
        patterns.sort_unstable();
        assert_eq!(patterns, (0..8).collect::<Vec<u8>>());
        for j in 0..3 {
            assert!(block.iter().all(|r| r[j].abs() == block[0][j].abs() && r[j] != 0.0));
        }
    }
}
