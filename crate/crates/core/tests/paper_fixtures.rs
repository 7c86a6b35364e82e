mod common;

use common::{fixture, read_csv};
use embagg::eval::{average_rank, CrossMatrix, PRETRAINED_ROW};
use embagg::pooling::{output_dim, AggregationStrategy};

fn cross_table() -> CrossMatrix {
    let t = read_csv(&fixture("table3_cross.csv"));
    let rows = t.rows.iter().map(|r| r[0].clone()).collect();
    let cells = t
        .rows
        .iter()
        .map(|r| r[1..].iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    CrossMatrix::new(rows, t.header[1..].to_vec(), cells).unwrap()
}

#[test]
fn cross_fixture_is_a_valid_matrix() {
    let m = cross_table();
    assert_eq!(m.columns, ["Olist", "Buscapé", "B2W", "UTLC-Apps", "UTLC-Movies"]);
    assert_eq!(m.rows.len(), 7);
    assert_eq!(m.rows.last().unwrap(), PRETRAINED_ROW);
    assert_eq!(m.cell(PRETRAINED_ROW, "UTLC-Movies"), Some(92.4));
    assert!(m.to_text().contains("95.9"));
}

#[test]
fn fine_tuned_diagonal_beats_pretrained_except_olist() {
    let m = cross_table();
    let diagonal: Vec<f64> = m.columns.iter().map(|c| m.cell(c, c).unwrap()).collect();
    assert_eq!(diagonal, [97.9, 93.9, 99.2, 97.9, 95.9]);
    let pretrained = m.cells.last().unwrap().clone();

    let labels = vec!["Fine-tuned".to_string(), PRETRAINED_ROW.to_string()];
    let table = average_rank(&labels, &m.columns, &[diagonal, pretrained]).unwrap();
    let fine = table.row("Fine-tuned").unwrap();
    assert_eq!(fine.ranks, [2.0, 1.0, 1.0, 1.0, 1.0]);
    assert_eq!(table.row(PRETRAINED_ROW).unwrap().ranks, [1.0, 2.0, 2.0, 2.0, 2.0]);
    assert_eq!(table.rows[0].label, "Fine-tuned");
    assert_eq!(fine.avg_rank, 1.2);
}

#[test]
fn rank_fixture_is_ordered_and_names_every_strategy() {
    let t = read_csv(&fixture("table2_avg_rank.csv"));
    assert_eq!(t.rows.len(), 26);
    let ranks: Vec<f64> = t.rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(ranks.windows(2).all(|w| w[0] <= w[1]));
    assert!(ranks.iter().all(|r| (1.0..=26.0).contains(r)));
    // Midranks would make the 26 averages sum to 26·27/2; shared minimum
    // ranks for ties can only lower the total.
    assert!(ranks.iter().sum::<f64>() <= 351.0);

    for size in ["Base", "Large"] {
        let mut seen: Vec<AggregationStrategy> = t
            .rows
            .iter()
            .filter(|r| r[0] == size)
            .map(|r| r[1].parse().unwrap())
            .collect();
        seen.sort();
        let mut all = AggregationStrategy::ALL.to_vec();
        all.sort();
        assert_eq!(seen, all, "{size}");
    }
    assert_eq!(t.rows[0][..3], ["Large", "first + mean + std", "1.0"]);
}

#[test]
fn dimensionality_matches_reported_sizes() {
    use AggregationStrategy::*;
    assert_eq!(output_dim(First, 768), 768);
    assert_eq!(output_dim(FirstPlusMean, 768), 1536);
    assert_eq!(output_dim(FirstMeanStd, 1024), 3072);
    assert_eq!(output_dim(Quantiles255075, 1024), 3072);
}

#[test]
fn stats_fixture_rows() {
    let t = read_csv(&fixture("table1_stats.csv"));
    let olist = &t.rows[0];
    assert_eq!(olist[..4], ["Olist", "30k", "4k", "4k"]);
    assert_eq!(olist[7], "70.0");
    assert_eq!(t.rows.last().unwrap()[0], "All");
}
