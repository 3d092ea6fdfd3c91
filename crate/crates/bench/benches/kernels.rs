use bezmortar::dual::{build_bezier_dual, build_global_dual};
use bezmortar::fem::assemble_biharmonic;
use bezmortar::model::load_model;
use bezmortar::mortar::{build_constraints, condense, null_space, Continuity, Strategy};
use bezmortar::spline::{extraction_operators, SplineSpace1D};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use std::path::PathBuf;

fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn bench_basis_eval(c: &mut Criterion) {
    let space = SplineSpace1D::open_uniform(3, 64).unwrap();
    c.bench_function("basis_eval_p3_64el", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for k in 0..1000 {
                let x = (k as f64 + 0.5) / 1000.0;
                let (_, ders) = space.eval_ders(black_box(x), 2).unwrap();
                acc += ders[2][0];
            }
            acc
        })
    });
}

fn bench_extraction(c: &mut Criterion) {
    let space = SplineSpace1D::open_uniform(4, 128).unwrap();
    c.bench_function("extraction_p4_128el", |b| {
        b.iter(|| extraction_operators(black_box(&space)))
    });
}

fn bench_duals(c: &mut Criterion) {
    let space = SplineSpace1D::open_uniform(3, 64).unwrap();
    c.bench_function("bezier_dual_p3_64el", |b| {
        b.iter(|| build_bezier_dual(black_box(&space)).unwrap())
    });
    c.bench_function("global_dual_p3_64el", |b| {
        b.iter(|| build_global_dual(black_box(&space)).unwrap())
    });
}

fn bench_coupling(c: &mut Criterion) {
    let model = load_model(&models_dir().join("two_patch_basic.model"))
        .unwrap()
        .discretize(3, 3)
        .unwrap();
    let sys = assemble_biharmonic(&model, None);
    c.bench_function("constraints_two_patch_p3_r3", |b| {
        b.iter(|| build_constraints(black_box(&model), Strategy::B, Continuity::C1).unwrap())
    });
    let cs = build_constraints(&model, Strategy::B, Continuity::C1).unwrap();
    c.bench_function("null_space_two_patch_p3_r3", |b| {
        b.iter(|| null_space(black_box(&cs)).unwrap())
    });
    let basis = null_space(&cs).unwrap();
    c.bench_function("condense_two_patch_p3_r3", |b| {
        b.iter(|| condense(black_box(&sys.stiffness), &sys.load, &basis).unwrap())
    });
}

fn bench_assembly(c: &mut Criterion) {
    let model = load_model(&models_dir().join("two_patch_basic.model"))
        .unwrap()
        .discretize(3, 2)
        .unwrap();
    c.bench_function("assemble_biharmonic_p3_r2", |b| {
        b.iter(|| assemble_biharmonic(black_box(&model), None))
    });
}

criterion_group!(
    benches,
    bench_basis_eval,
    bench_extraction,
    bench_duals,
    bench_coupling,
    bench_assembly
);
criterion_main!(benches);
