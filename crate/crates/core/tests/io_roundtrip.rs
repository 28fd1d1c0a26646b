use knn_merge::construct::nn_descent;
use knn_merge::hierarchy::Pyramid;
use knn_merge::merge::h_merge;
use knn_merge::{generate_sparse, generate_uniform, io, DescentParams, DiversifyParams, Evaluator, Hierarchy, MergeParams, Metric};

#[test]
fn datasets_graphs_and_hierarchies_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let dense = generate_uniform(400, 7, 1).unwrap();
    let sparse = generate_sparse(300, 500, 3, 20, 2).unwrap();
    io::save_dataset(&dir.path().join("d.fvecs"), &dense).unwrap();
    io::save_dataset(&dir.path().join("s.txt"), &sparse).unwrap();
    assert_eq!(io::load_dataset(&dir.path().join("d.fvecs")).unwrap(), dense);
    assert_eq!(io::load_dataset(&dir.path().join("s.txt")).unwrap().len(), sparse.len());
    for i in 0..sparse.len() as u32 {
        assert_eq!(io::load_dataset(&dir.path().join("s.txt")).unwrap().record(i), sparse.record(i));
    }

    let ev = Evaluator::new(&sparse, Metric::Jaccard).unwrap();
    let (g, _) = nn_descent(&ev, &DescentParams::new(8), 3).unwrap();
    io::save_graph(&dir.path().join("g.knng"), &g).unwrap();
    assert_eq!(io::load_graph(&dir.path().join("g.knng")).unwrap().id_lists(), g.id_lists());

    let ev = Evaluator::new(&dense, Metric::L2).unwrap();
    let (_, pyr, _) = h_merge(&ev, &MergeParams::new(8), &[20, 100, 400]).unwrap();
    pyr.save(&dir.path().join("pyr")).unwrap();
    let back = Pyramid::load(&dir.path().join("pyr")).unwrap();
    assert_eq!(back.sizes(), vec![20, 100, 400]);
    let h = back.diversify(&ev, &DiversifyParams::default());
    h.save(&dir.path().join("hier")).unwrap();
    let h2 = Hierarchy::load(&dir.path().join("hier")).unwrap();
    assert_eq!(h2.sizes(), h.sizes());
    for (a, b) in h.layers().iter().zip(h2.layers()) {
        assert_eq!(a, b);
    }
}

#[test]
fn truncated_files_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.fvecs");
    std::fs::write(&p, [4u8, 0, 0, 0, 0, 0]).unwrap();
    assert!(io::load_dataset(&p).is_err());
    let g = dir.path().join("x.knng");
    std::fs::write(&g, b"KNNG").unwrap();
    assert!(io::load_graph(&g).is_err());
}
