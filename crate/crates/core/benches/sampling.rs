use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ncidirac::exec::{map_with, set_mode, ExecMode};
use ncidirac::geometry as geo;
use ncidirac::model::Model;
use ncidirac::sampling::{stream_rng, SampleBox};
use ncidirac::verify::{verify_model, Options, Suite};

fn load(name: &str) -> Model {
    Model::load(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models").join(name)).expect("bundled model")
}

fn curvature(m: &Model, x: &[f64]) -> f64 {
    let fr = m.frames(x, 2, m.preferred_source()).expect("frames");
    let gam = geo::christoffel_frame(&fr, &m.alg, &m.split, &m.form, m.nx).expect("christoffel");
    let metric = geo::metric_jets(&fr, &m.split, &m.form, m.nx);
    geo::scalar_curvature(&gam, &metric.upper, m.nx).expect("curvature")
}

fn per_point(c: &mut Criterion) {
    let m = load("five_dim.json");
    let pts = SampleBox::cube(m.nx, -0.3, 0.3).samples(128, &mut stream_rng(1, "bench"));
    let mut g = c.benchmark_group("curvature_128_points");
    for (name, mode) in [("parallel", ExecMode::Parallel), ("sequential", ExecMode::Sequential)] {
        g.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| black_box(map_with(mode, &pts, |x| curvature(&m, x))));
        });
    }
    g.finish();
}

fn suite(c: &mut Criterion) {
    let m = load("ads3.json");
    let opts = Options { suites: vec![Suite::Geometry, Suite::Dirac], timings: false, ..Options::default() };
    let mut g = c.benchmark_group("ads3_geometry_dirac");
    g.sample_size(10);
    for (name, mode) in [("parallel", ExecMode::Parallel), ("sequential", ExecMode::Sequential)] {
        g.bench_function(name, |b| {
            set_mode(mode);
            b.iter(|| black_box(verify_model(&m, &opts).expect("verifies")));
        });
    }
    set_mode(ExecMode::Parallel);
    g.finish();
}

criterion_group!(benches, per_point, suite);
criterion_main!(benches);
