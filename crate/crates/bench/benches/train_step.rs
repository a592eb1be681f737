use addressee_bench::batch_inputs;
use addressee_core::model::{Experiment, Model, ModelProfile};
use addressee_core::numerics::Graph;
use criterion::{criterion_group, criterion_main, Criterion};

/// Forward and backward pass of one 10-sequence batch, per experiment, desk profile.
fn train_step(c: &mut Criterion) {
    let profile = ModelProfile::desk();
    let (faces, poses) = batch_inputs(&profile, 10);
    let mut group = c.benchmark_group("train_step_desk");
    group.sample_size(10);
    for e in Experiment::ALL {
        let mut model = Model::new(e, &profile, 0).unwrap();
        let labels: Vec<usize> = (0..10).map(|i| i % model.class_count()).collect();
        group.bench_function(e.tag(), |b| {
            b.iter(|| {
                let mut g = Graph::new();
                let vars = model.params.bind(&mut g, true);
                let f = g.constant(faces.clone());
                let p = g.constant(poses.clone());
                let out = model.forward(&mut g, &vars, f, p).unwrap();
                let loss = g.nll_loss(out, &labels).unwrap();
                g.backward(loss).unwrap();
                model.params.accumulate_grads(&g, &vars);
                model.params.zero_grad();
            })
        });
    }
    group.finish();
}

criterion_group!(benches, train_step);
criterion_main!(benches);
