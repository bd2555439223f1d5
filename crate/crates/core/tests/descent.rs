use proptest::prelude::*;
use tetrf_core::subdivision::{child_vertices, select_child, DescentState};
use tetrf_core::tetmesh::point_from_barycentric;
use tetrf_core::{ChildIndex, Vec3};

fn bary_strategy() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(0.001f64..1.0).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.map(|x| x / s)
    })
}

fn tet_strategy() -> impl Strategy<Value = [Vec3; 4]> {
    prop::array::uniform4(prop::array::uniform3(-2.0f64..2.0)).prop_filter_map("degenerate", |p| {
        let mut v = p.map(|[x, y, z]| Vec3::new(x, y, z));
        let vol = (v[1] - v[0]).cross(v[2] - v[0]).dot(v[3] - v[0]);
        if vol.abs() < 0.05 {
            return None;
        }
        if vol < 0.0 {
            v.swap(2, 3);
        }
        Some(v)
    })
}

fn affine(v: [Vec3; 4], m: [[f64; 3]; 3], t: Vec3) -> [Vec3; 4] {
    v.map(|p| Vec3::new(
        m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z + t.x,
        m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z + t.y,
        m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z + t.z,
    ))
}

proptest! {
    #[test]
    fn descent_preserves_the_point(tet in tet_strategy(), bary in bary_strategy()) {
        let p = point_from_barycentric(&tet, &bary);
        let mut state = DescentState::new(bary, tet);
        for _ in 0..6 {
            state = state.descend().1;
            prop_assert!((state.canonical_point() - p).norm() <= 1e-9);
            prop_assert!(state.bary.iter().all(|&b| b >= -1e-9));
            prop_assert!((state.bary.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn child_sequence_ignores_vertex_positions(
        tet in tet_strategy(),
        bary in bary_strategy(),
        m in prop::array::uniform3(prop::array::uniform3(-1.0f64..1.0)),
        t in prop::array::uniform3(-5.0f64..5.0),
    ) {
        let moved = affine(tet, m, Vec3::new(t[0], t[1], t[2]));
        let mut a = DescentState::new(bary, tet);
        let mut b = DescentState::new(bary, tet).with_deformed(moved);
        for _ in 0..5 {
            let (ka, na) = a.descend();
            let (kb, nb) = b.descend();
            prop_assert_eq!(ka, kb);
            prop_assert_eq!(na.bary, nb.bary);
            let deformed = nb.deformed_vertices.unwrap();
            let expected = affine(na.canonical_vertices, m, Vec3::new(t[0], t[1], t[2]));
            for (d, e) in deformed.iter().zip(&expected) {
                prop_assert!((*d - *e).norm() <= 1e-9);
            }
            a = na;
            b = nb;
        }
    }
}

#[test]
fn selection_rule_regions() {
    let cases = [
        ([0.75, 0.1, 0.1, 0.05], 0),
        ([0.1, 0.6, 0.2, 0.1], 1),
        ([0.1, 0.1, 0.7, 0.1], 2),
        ([0.05, 0.05, 0.1, 0.8], 3),
        ([0.35, 0.30, 0.15, 0.20], 4),
        ([0.25, 0.25, 0.25, 0.25], 4),
        ([0.4, 0.05, 0.2, 0.35], 5),
        ([0.1, 0.35, 0.3, 0.25], 6),
        ([0.3, 0.4, 0.2, 0.1], 7),
    ];
    for (bary, k) in cases {
        assert_eq!(select_child(&bary).get(), k, "{bary:?}");
    }
}

#[test]
fn children_meet_at_shared_midpoints() {
    let tet = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)];
    let c0 = child_vertices(&tet, ChildIndex::new(0).unwrap());
    let c1 = child_vertices(&tet, ChildIndex::new(1).unwrap());
    let c4 = child_vertices(&tet, ChildIndex::new(4).unwrap());
    assert_eq!(c0[1], c1[1]);
    assert_eq!(c0[1], c4[0]);
    assert_eq!(c0[1], Vec3::new(0.5, 0.0, 0.0));
}
