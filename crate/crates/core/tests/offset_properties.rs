mod common;

use clinspan::preprocess::{preprocess, Direction, OffsetMap, PassConfig, Projection};
use clinspan::span::TextRange;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Project through `first` then `second`, carrying dropped positions.
fn sequential(
    first: &OffsetMap,
    second: &OffsetMap,
    dir: Direction,
    range: TextRange,
) -> Projection {
    let (x, y) = match dir {
        Direction::Forward => (first, second),
        Direction::Backward => (second, first),
    };
    match x.project(dir, range).unwrap() {
        Projection::Mapped(r) => y.project(dir, r).unwrap(),
        Projection::Dropped { at } => y.project_point(dir, at).unwrap(),
    }
}

fn all_ranges(len: usize) -> impl Iterator<Item = TextRange> {
    (0..=len).flat_map(move |s| (s..=len).map(move |e| TextRange::new(s, e)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn composite_equals_sequential(seed in any::<u64>(), len in 0usize..14) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = common::random_map(&mut rng, len);
        let b = common::random_map(&mut rng, a.clean_len());
        let c = a.compose(&b).unwrap();
        c.check().unwrap();
        prop_assert_eq!(c.orig_len(), a.orig_len());
        prop_assert_eq!(c.clean_len(), b.clean_len());
        for r in all_ranges(len) {
            prop_assert_eq!(c.project(Direction::Forward, r).unwrap(),
                sequential(&a, &b, Direction::Forward, r), "forward {:?}", r);
        }
        for r in all_ranges(c.clean_len()) {
            prop_assert_eq!(c.project(Direction::Backward, r).unwrap(),
                sequential(&a, &b, Direction::Backward, r), "backward {:?}", r);
        }
    }

    #[test]
    fn flat_view_covers_composite(seed in any::<u64>(), len in 0usize..14) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = common::random_map(&mut rng, len);
        let b = common::random_map(&mut rng, a.clean_len());
        let c = a.compose(&b).unwrap();
        let flat = OffsetMap::from_segments(c.segments()).unwrap();
        prop_assert_eq!(flat.orig_len(), c.orig_len());
        prop_assert_eq!(flat.clean_len(), c.clean_len());
        for r in all_ranges(len).filter(|r| !r.is_empty()) {
            if let Projection::Mapped(exact) = c.project(Direction::Forward, r).unwrap() {
                let hull = flat.project(Direction::Forward, r).unwrap().mapped();
                prop_assert!(hull.is_some_and(|h| h.start <= exact.start && exact.end <= h.end),
                    "{:?}: {:?} not within {:?}", r, exact, hull);
            }
        }
    }

    #[test]
    fn identity_is_neutral(seed in any::<u64>(), len in 0usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = common::random_map(&mut rng, len);
        prop_assert_eq!(&OffsetMap::identity(len).compose(&m).unwrap(), &m);
        prop_assert_eq!(&m.compose(&OffsetMap::identity(m.clean_len())).unwrap(), &m);
    }

    #[test]
    fn preprocess_is_idempotent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let text = common::random_text(&mut rng, 30);
        let once = preprocess(&text, &PassConfig::all());
        once.offset_map.check().unwrap();
        prop_assert_eq!(once.offset_map.orig_len(), text.chars().count());
        prop_assert_eq!(once.offset_map.clean_len(), once.clean_text.chars().count());
        let twice = preprocess(&once.clean_text, &PassConfig::all());
        prop_assert_eq!(&twice.clean_text, &once.clean_text, "input {:?}", text);
        prop_assert!(twice.offset_map.is_identity());
    }

    #[test]
    fn project_then_invert_on_copy_edges(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let text = common::random_text(&mut rng, 25);
        let p = preprocess(&text, &PassConfig::all());
        let map = &p.offset_map;
        let copy_positions: Vec<(usize, usize)> = map
            .segments()
            .iter()
            .filter(|s| s.kind == clinspan::preprocess::SegmentKind::Copy)
            .flat_map(|s| (0..s.clean.len()).map(move |i| (s.clean.start + i, s.orig.start + i)))
            .collect();
        for (i, &(cs, _)) in copy_positions.iter().enumerate() {
            for &(ce, _) in &copy_positions[i..] {
                let clean = TextRange::new(cs, ce + 1);
                let back = map.to_original(clean).unwrap().mapped().unwrap();
                prop_assert_eq!(map.to_clean(back).unwrap(), Projection::Mapped(clean));
            }
        }
    }
}
