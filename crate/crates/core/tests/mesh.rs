use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tetrf_core::tetmesh::{barycentric_of_point, NO_NEIGHBOR};
use tetrf_core::{generate_grid, TetGridConfig, Vec3};

/// Counts for `n` BCC cells per axis: cube corners, cell centers, one
/// apex per boundary face; four tets around every cell face.
fn lattice_counts(n: usize) -> (usize, usize) {
    let faces = 3 * (n - 1) * n * n + 6 * n * n;
    ((n + 1).pow(3) + n.pow(3) + 6 * n * n, 4 * faces)
}

#[test]
fn grid_counts_match_the_lattice() {
    for (spacing, n) in [(0.25, 2), (0.05, 10), (0.02, 25)] {
        let grid = generate_grid(&TetGridConfig::new(spacing)).unwrap();
        assert_eq!((grid.num_vertices(), grid.num_tets()), lattice_counts(n), "spacing {spacing}");
    }
    assert_eq!(lattice_counts(10), (2_931, 13_200));
}

#[test]
fn grid_fills_the_unit_cube() {
    let grid = generate_grid(&TetGridConfig::new(0.1)).unwrap();
    assert!((grid.total_volume() - 1.0).abs() < 1e-12);
    for t in 0..grid.num_tets() as u32 {
        assert!(grid.tet_volume(t) > 0.0);
    }
    let b = grid.bounds();
    assert_eq!((b.min, b.max), (Vec3::ZERO, Vec3::splat(1.0)));
}

#[test]
fn adjacency_is_symmetric() {
    let grid = generate_grid(&TetGridConfig::new(0.1)).unwrap();
    let adj = grid.face_adjacency();
    let mut boundary = 0;
    for (t, faces) in adj.iter().enumerate() {
        for &n in faces {
            if n == NO_NEIGHBOR {
                boundary += 1;
            } else {
                assert!(adj[n as usize].contains(&(t as u32)));
            }
        }
    }
    assert_eq!(boundary, grid.boundary_faces().len());
}

#[test]
fn walk_and_bvh_agree_with_brute_force() {
    let grid = generate_grid(&TetGridConfig::new(0.1)).unwrap();
    let locator = grid.locator();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..500 {
        let p = Vec3::new(rng.gen(), rng.gen(), rng.gen());
        let hint = (i * 37 % grid.num_tets()) as u32;
        let loc = locator.locate(p, Some(hint)).expect("inside the cube");
        let brute: Vec<u32> = (0..grid.num_tets() as u32)
            .filter(|&t| barycentric_of_point(&grid.tet_vertices(t), p).unwrap().iter().all(|&b| b >= -1e-9))
            .collect();
        assert!(brute.contains(&loc.tet), "{p:?}: {} not in {brute:?}", loc.tet);
        assert_eq!(locator.locate_bvh(p).map(|l| brute.contains(&l.tet)), Some(true));
    }
    assert!(locator.locate(Vec3::splat(1.5), Some(0)).is_none());
}

#[test]
fn pruning_keeps_selected_tets_only() {
    let grid = generate_grid(&TetGridConfig::new(0.1)).unwrap();
    let keep: Vec<bool> = (0..grid.num_tets() as u32).map(|t| grid.tet_vertices(t).iter().all(|v| v.x <= 0.5)).collect();
    let (pruned, old_ids) = grid.prune_with_map(&keep).unwrap();
    assert_eq!(pruned.num_tets(), keep.iter().filter(|&&k| k).count());
    let kept_volume: f64 = (0..grid.num_tets() as u32).filter(|&t| keep[t as usize]).map(|t| grid.tet_volume(t)).sum();
    assert!((pruned.total_volume() - kept_volume).abs() < 1e-12);
    for (new, &old) in old_ids.iter().enumerate() {
        assert_eq!(pruned.vertices()[new], grid.vertices()[old as usize]);
    }
    assert!(old_ids.windows(2).all(|w| w[0] < w[1]));
}
