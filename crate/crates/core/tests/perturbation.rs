//! A tiny increment must still move every vector component after a second epoch.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tedl::eval::{codebook_rxy, sim_distribution};
use tedl::fixtures::{citation_store, TextGenerator};
use tedl::pipeline::{stage_one, train_and_build};
use tedl::{Key, Seed, TrainingConfig};

#[test]
fn ten_thousandth_increment_moves_every_component() {
    let gen = TextGenerator::new(4_000, 1.0, 8);
    let original = gen.tokens(200_000, &mut ChaCha8Rng::seed_from_u64(9));
    let store = citation_store(&gen, 50, 5, 3, 10);
    let key = Key {
        n1: 4,
        n2: 1,
        n3: 0,
        n4: Seed::from_u64(3),
    };
    let gamma = stage_one(&key, &store, &original, &TrainingConfig::new(10, Seed::default())).unwrap();
    assert_eq!(gamma.training.epochs, 2);
    assert!(gamma.corpus.ratio() <= 1e-4, "{}", gamma.corpus.ratio());
    let alpha = train_and_build(&original, &gamma.training).unwrap();

    let (ta, tg) = (&alpha.model.vectors, &gamma.built.model.vectors);
    let mut shared = 0;
    for (w, a) in ta.iter() {
        let Some(g) = tg.get(w) else { continue };
        shared += 1;
        for (i, (x, y)) in a.iter().zip(g).enumerate() {
            assert_ne!(x, y, "{w}[{i}] unchanged");
        }
    }
    assert_eq!(shared, ta.len());

    let sims = sim_distribution(ta, tg).unwrap();
    assert!(*sims.last().unwrap() < 0.9999);
    let r: Vec<f64> = codebook_rxy(&alpha.codebook, &gamma.built.codebook).into_iter().map(|x| x.1).collect();
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    assert!((mean - 0.5).abs() < 0.01, "{mean}");
}
