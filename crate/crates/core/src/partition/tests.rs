use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

/// Boxes given as `(lower, upper)`, members assigned by the membership rule.
fn boxes(x: &Points, spec: &[(&[f64], &[f64])], n_min: usize, n_max: usize) -> Partitioning {
    let mut cells: Vec<HyperRect> = spec
        .iter()
        .map(|(l, u)| HyperRect::new(l.to_vec(), u.to_vec()))
        .collect();
    for (i, row) in x.rows().enumerate() {
        let c = cells.iter().position(|c| c.contains(row)).expect("point covered");
        cells[c].members.push(i);
    }
    Partitioning::from_cells(x.dim(), cells, n_min, n_max)
}

/// `n` evenly spread points inside a box.
fn fill(data: &mut Vec<f64>, lower: &[f64], upper: &[f64], n: usize) {
    for k in 0..n {
        let t = (k as f64 + 0.5) / n as f64;
        for p in 0..lower.len() {
            let s = (t * (p as f64 * 3.7 + 1.0)).fract();
            data.push(lower[p] + s * (upper[p] - lower[p]));
        }
    }
}

fn grid_4x4() -> Points {
    let c = [0.125, 0.375, 0.625, 0.875];
    Points::new(2, c.iter().flat_map(|&a| c.iter().flat_map(move |&b| [a, b])).collect())
}

#[test]
fn uniform_grid_medians_give_four_cells_of_four() {
    let x = grid_4x4();
    let part = initialize_grid(&x, &[2, 2]).unwrap();
    assert_eq!(part.len(), 4);
    assert!(part.cells().iter().all(|c| c.len() == 4));
    assert!(part
        .cells()
        .iter()
        .all(|c| c.lower.iter().chain(&c.upper).all(|v| [0.0, 0.5, 1.0].contains(v))));
}

#[test]
fn hand_traced_merge_on_4x4_grid() {
    // Cells (row-major, last dim fastest): 0=[0,.5)×[0,.5), 1=[0,.5)×[.5,1],
    // 2=[.5,1]×[0,.5), 3=[.5,1]×[.5,1]; each holds 4 points, N_min = 5.
    // Step 1: target 0 (smallest, lowest index). Usable directions are
    //   dim 0 upper → {0,2}, cost 4, box [0,1]×[0,.5), aspect 2
    //   dim 1 upper → {0,1}, cost 4, box [0,.5)×[0,1], aspect 2
    //   full tie, so dim 0 wins by order → cell 0 := [0,1]×[0,.5) with 8 points.
    // Step 2: targets {1,3}; target 1:
    //   dim 0 upper → {1,3}, cost 4
    //   dim 1 lower → the merged cell; the box is the whole cube, absorbing 3 too: cost 12
    //   → cell 1 := [0,1]×[.5,1] with 8 points.
    let x = grid_4x4();
    let part = initialize_grid(&x, &[2, 2]).unwrap().with_bounds(5, 10).unwrap();
    let merged = merge_pass(part).unwrap();
    assert_eq!(merged.len(), 2);
    let c0 = &merged.cells()[0];
    let c1 = &merged.cells()[1];
    assert_eq!(
        (c0.lower.as_slice(), c0.upper.as_slice()),
        (&[0.0, 0.0][..], &[1.0, 0.5][..])
    );
    assert_eq!(
        (c1.lower.as_slice(), c1.upper.as_slice()),
        (&[0.0, 0.5][..], &[1.0, 1.0][..])
    );
    assert_eq!(c0.members, vec![0, 1, 4, 5, 8, 9, 12, 13]);
    assert_eq!(c1.len(), 8);
    // no split needed at N_max = 10
    let done = split_pass(merged.clone(), &x).unwrap();
    assert_eq!(done, merged);
    done.check_invariants(&x, true).unwrap();
}

#[test]
fn forced_merge_in_1d() {
    let mut data = Vec::new();
    fill(&mut data, &[0.0], &[0.5], 3);
    fill(&mut data, &[0.5], &[1.0], 60);
    let x = Points::new(1, data);
    let part = boxes(&x, &[(&[0.0], &[0.5]), (&[0.5], &[1.0])], 50, 150);
    let merged = merge_pass(part).unwrap();
    assert_eq!(merged.len(), 1);
    assert_eq!(merged.cells()[0].len(), 63);
}

#[test]
fn equal_cost_directions_resolved_by_aspect_ratio() {
    // target [0,.5)×[0,.2) with 3 points;
    // dim 0 upper: [.5,1]×[0,.2) (60 points) → merged box aspect 1/0.2 = 5
    // dim 1 upper: [0,.5)×[.2,1] (60 points) → merged box aspect 1/0.5 = 2 → wins
    let spec: [(&[f64], &[f64]); 4] = [
        (&[0.0, 0.0], &[0.5, 0.2]),
        (&[0.5, 0.0], &[1.0, 0.2]),
        (&[0.0, 0.2], &[0.5, 1.0]),
        (&[0.5, 0.2], &[1.0, 1.0]),
    ];
    let mut data = Vec::new();
    for (k, n) in [3, 60, 60, 100].into_iter().enumerate() {
        fill(&mut data, spec[k].0, spec[k].1, n);
    }
    let x = Points::new(2, data);
    let part = boxes(&x, &spec, 50, 150);
    let merged = merge_pass(part).unwrap();
    assert_eq!(merged.len(), 3);
    assert_eq!(merged.cells()[0].lower, vec![0.0, 0.0]);
    assert_eq!(merged.cells()[0].upper, vec![0.5, 1.0]);
    assert_eq!(merged.cells()[0].len(), 63);
}

#[test]
fn partial_overlap_direction_is_skipped() {
    // A = [0,.5)×[0,.5) is the target with one point.
    // dim 0 upper: {B, C} → box [0,1]×[0,.5), tiled exactly, cost 20
    // dim 1 upper: {D, E} → E reaches x = 1, the box would cut B and C, so unusable
    let spec: [(&[f64], &[f64]); 5] = [
        (&[0.0, 0.0], &[0.5, 0.5]),
        (&[0.5, 0.0], &[1.0, 0.25]),
        (&[0.5, 0.25], &[1.0, 0.5]),
        (&[0.0, 0.5], &[0.25, 1.0]),
        (&[0.25, 0.5], &[1.0, 1.0]),
    ];
    let mut data = Vec::new();
    for (k, n) in [1, 10, 10, 10, 10].into_iter().enumerate() {
        fill(&mut data, spec[k].0, spec[k].1, n);
    }
    let x = Points::new(2, data);
    let part = boxes(&x, &spec, 5, 100);
    let merged = merge_pass(part).unwrap();
    merged.check_invariants(&x, true).unwrap();
    assert_eq!(merged.cells()[0].upper, vec![1.0, 0.5]);
    assert_eq!(merged.cells()[0].len(), 21);
}

#[test]
fn pinwheel_requires_fallback() {
    // Pinwheel tiling around a small centre: every single-direction box cuts a
    // neighbour partially, so the target is deferred and merged by closure.
    let spec: [(&[f64], &[f64]); 5] = [
        (&[0.4, 0.4], &[0.6, 0.6]), // centre
        (&[0.0, 0.0], &[0.6, 0.4]), // bottom
        (&[0.6, 0.0], &[1.0, 0.6]), // right
        (&[0.4, 0.6], &[1.0, 1.0]), // top
        (&[0.0, 0.4], &[0.4, 1.0]), // left
    ];
    let mut data = Vec::new();
    for (k, n) in [2, 30, 30, 30, 30].into_iter().enumerate() {
        fill(&mut data, spec[k].0, spec[k].1, n);
    }
    let x = Points::new(2, data);
    let part = boxes(&x, &spec, 10, 200);
    let merged = merge_pass(part).unwrap();
    merged.check_invariants(&x, true).unwrap();
    assert_eq!(merged.len(), 1);
    assert_eq!(merged.cells()[0].len(), 122);
}

#[test]
fn forced_split_at_median() {
    let x = Points::new(1, (0..200).map(|i| (i as f64 + 0.5) / 200.0).collect());
    let part = initialize_grid(&x, &[1]).unwrap().with_bounds(50, 150).unwrap();
    let done = split_pass(merge_pass(part).unwrap(), &x).unwrap();
    assert_eq!(done.len(), 2);
    assert_eq!(done.cells()[0].len(), 100);
    assert_eq!(done.cells()[1].len(), 100);
    assert_eq!(done.cells()[0].upper[0], 0.5);
    assert_eq!(done.neighbours(0), &[1]);
}

#[test]
fn identical_points_flagged_oversize() {
    let x = Points::new(2, [0.3, 0.3].repeat(300));
    let part = initialize_grid(&x, &[1, 1]).unwrap().with_bounds(50, 150).unwrap();
    let done = split_pass(part, &x).unwrap();
    assert_eq!(done.len(), 1);
    assert!(done.cells()[0].oversize);
    done.check_invariants(&x, true).unwrap();
}

#[test]
fn tied_median_moves_cut() {
    // 120 points at 0.2 and 80 spread over (0.5, 1): the median gap is tied,
    // the nearest valid gap sits at 120|80.
    let mut v: Vec<f64> = vec![0.2; 120];
    v.extend((0..80).map(|i| 0.5 + i as f64 / 200.0));
    let x = Points::new(1, v);
    let part = initialize_grid(&x, &[1]).unwrap().with_bounds(50, 150).unwrap();
    let done = split_pass(part, &x).unwrap();
    assert_eq!(done.len(), 2);
    assert_eq!(done.cells()[0].len(), 120);
    assert_eq!(done.cells()[1].len(), 80);
    done.check_invariants(&x, true).unwrap();
}

#[test]
fn graph_examples() {
    let x = grid_4x4();
    let g = initialize_grid(&x, &[2, 2]).unwrap().graph();
    assert_eq!(g.edge_count(), 4);
    assert_eq!(g.edges(), vec![(0, 1), (0, 2), (1, 3), (2, 3)]);

    let one = initialize_grid(&x, &[1, 1]).unwrap();
    assert_eq!(build_graph(&one).edge_count(), 0);

    let strip = boxes(
        &x,
        &[
            (&[0.0, 0.0], &[0.3, 1.0]),
            (&[0.3, 0.0], &[0.7, 1.0]),
            (&[0.7, 0.0], &[1.0, 1.0]),
        ],
        1,
        100,
    );
    let g = build_graph(&strip);
    assert_eq!(g.edges(), vec![(0, 1), (1, 2)]);
}

#[test]
fn sixty_points_collapse_to_one_cell() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Points::new(2, (0..120).map(|_| rng.random::<f64>()).collect());
    for grid in [[1, 1], [3, 3], [8, 2]] {
        let (part, graph) = partition_pipeline(&x, 50, 150, Some(&grid)).unwrap();
        assert_eq!(part.len(), 1, "grid {grid:?}");
        assert_eq!(graph.edge_count(), 0);
    }
}

#[test]
fn uniform_5000_respects_forced_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = Points::new(2, (0..10_000).map(|_| rng.random::<f64>()).collect());
    let (part, graph) = partition_pipeline(&x, 50, 150, None).unwrap();
    part.check_invariants(&x, true).unwrap();
    let m = part.len();
    assert!((34..=100).contains(&m), "{m} cells");
    assert_eq!(graph, build_graph(&part));
}

#[test]
fn pipeline_rejects_bad_bounds() {
    let x = grid_4x4();
    assert!(partition_pipeline(&x, 5, 9, None).is_err());
    assert!(partition_pipeline(&x, 20, 40, None).is_err());
}

#[test]
fn dump_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = Points::new(3, (0..3000).map(|_| rng.random::<f64>()).collect());
    let (part, graph) = partition_pipeline(&x, 20, 60, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_partition(dir.path(), &part, &graph).unwrap();
    let (back, g2) = read_partition(dir.path()).unwrap();
    assert_eq!(back, part);
    assert_eq!(g2, graph);
}

fn clustered(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Points {
    let centres: Vec<Vec<f64>> = (0..4).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        if rng.random::<f64>() < 0.3 {
            data.extend((0..d).map(|_| rng.random::<f64>()));
        } else {
            let c = &centres[rng.random_range(0..centres.len())];
            data.extend(
                c.iter()
                    .map(|m| (m + 0.05 * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0)),
            );
        }
    }
    Points::new(d, data)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pipeline_invariants(seed in any::<u64>(), n in 100usize..3000, d in 1usize..4, n_min in 3usize..40, ratio in 2.0f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = clustered(&mut rng, n, d);
        let n_max = (n_min as f64 * ratio).ceil() as usize;
        prop_assume!(n >= n_min);
        let (part, graph) = partition_pipeline(&x, n_min, n_max, None).unwrap();
        prop_assert_eq!(part.check_invariants(&x, true), Ok(()));
        prop_assert_eq!(&graph, &build_graph(&part));
        for (i, j) in graph.edges() {
            prop_assert!(graph.neighbours(j).contains(&i));
        }
    }
}
