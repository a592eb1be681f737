use addressee_bench::filled;
use addressee_core::numerics::{lstm, Graph, LstmParams};
use criterion::{criterion_group, criterion_main, Criterion};

fn conv_forward_backward(c: &mut Criterion) {
    // first face convolution of the desk profile, one 10-sequence batch
    let input = filled(&[100, 3, 32, 32], 1);
    let weight = filled(&[6, 3, 7, 7], 2);
    let bias = filled(&[6], 3);
    c.bench_function("conv2d_7x7_desk_batch", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let x = g.constant(input.clone());
            let w = g.leaf(weight.clone(), true);
            let bb = g.leaf(bias.clone(), true);
            let y = g.conv2d(x, w, bb, (1, 1)).unwrap();
            let p = g.maxpool2d(y, (2, 2), (2, 2)).unwrap();
            let s = g.sum(p);
            g.backward(s).unwrap();
            g.grad(w)
        })
    });
}

fn lstm_forward_backward(c: &mut Criterion) {
    // fused intermediate-fusion input: 10 sequences of 10 frames, 1158 wide, 512 hidden
    let (d, h) = (1158, 512);
    let seq = filled(&[10, 10, d], 4);
    let params = [filled(&[4 * h, d], 5), filled(&[4 * h, h], 6), filled(&[4 * h], 7), filled(&[4 * h], 8)].map(|mut t| {
        t.data_mut().iter_mut().for_each(|v| *v *= 0.01);
        t
    });
    let mut group = c.benchmark_group("lstm");
    group.sample_size(10);
    group.bench_function("lstm_1158_to_512", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let x = g.constant(seq.clone());
            let v: Vec<_> = params.iter().map(|t| g.leaf(t.clone(), true)).collect();
            let p = LstmParams { w_ih: v[0], w_hh: v[1], b_ih: v[2], b_hh: v[3] };
            let out = lstm(&mut g, x, &p, None, None).unwrap();
            let s = g.sum(out.last_hidden);
            g.backward(s).unwrap();
            g.grad(v[0])
        })
    });
    group.finish();
}

criterion_group!(benches, conv_forward_backward, lstm_forward_backward);
criterion_main!(benches);
