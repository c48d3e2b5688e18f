mod common;

use common::{oracle_labels, realize, Cell};
use proptest::prelude::*;
use vitalfuse::anomaly::{classify_grid, AnomalyLabel};
use vitalfuse::model::NormalRanges;

fn cell() -> impl Strategy<Value = Cell> {
    prop_oneof![
        1 => Just(Cell::Empty),
        3 => Just(Cell::Below),
        4 => Just(Cell::In),
        3 => Just(Cell::Above),
    ]
}

fn grid(max_rows: usize) -> impl Strategy<Value = Vec<[Cell; 5]>> {
    prop::collection::vec(prop::array::uniform5(cell()), 1..=max_rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn matches_reference_rule(g in grid(6), age in 0u32..=130) {
        let ranges = NormalRanges::default();
        let records = realize(&g, &ranges, age);
        let got = classify_grid(&records, &ranges, age).unwrap();
        prop_assert_eq!(got, oracle_labels(&g));
    }

    #[test]
    fn in_range_cells_are_never_flagged(g in grid(4)) {
        let ranges = NormalRanges::default();
        let got = classify_grid(&realize(&g, &ranges, 40), &ranges, 40).unwrap();
        for (r, row) in g.iter().enumerate() {
            for c in 0..5 {
                match row[c] {
                    Cell::In => prop_assert_eq!(got[r][c], Some(AnomalyLabel::Normal)),
                    Cell::Empty => prop_assert_eq!(got[r][c], None),
                    _ => prop_assert!(got[r][c].is_some()),
                }
            }
        }
    }

    #[test]
    fn deterministic(g in grid(5)) {
        let ranges = NormalRanges::default();
        let records = realize(&g, &ranges, 30);
        prop_assert_eq!(
            classify_grid(&records, &ranges, 30).unwrap(),
            classify_grid(&records, &ranges, 30).unwrap()
        );
    }
}

#[test]
fn lone_spike_in_single_row_is_a_reading_error() {
    let ranges = NormalRanges::default();
    let g = [[Cell::In, Cell::In, Cell::Above, Cell::In, Cell::Empty]];
    let got = classify_grid(&realize(&g, &ranges, 30), &ranges, 30).unwrap();
    assert_eq!(got[0][2], Some(AnomalyLabel::ReadingError));
}

#[test]
fn empty_grid_is_rejected() {
    let ranges = NormalRanges::default();
    assert!(classify_grid(&realize(&[], &ranges, 30), &ranges, 30).is_err());
}
