use rand::Rng;
use wearlab::defenses::{add_dummies, defend_dataset, delay_group, Defense, SizeSource};
use wearlab::rng::seeded;
use wearlab::synth::{default_pack, generate_dataset};
use wearlab::trace::{quantize_us, Direction, Flavor, PacketRecord, TraceSample};

#[test]
fn delay_group_on_uniform_arrivals_costs_half_a_second() {
    for seed in 0..10 {
        let mut rng = seeded(seed);
        let mut ts: Vec<f64> = (0..5000).map(|_| quantize_us(rng.random_range(0.0..1000.0))).collect();
        ts.sort_by(f64::total_cmp);
        let s = TraceSample::new(ts.iter().map(|&t| PacketRecord::data(t, Direction::MasterToSlave, 10)).collect(), Flavor::Classic);
        let (_, cost) = delay_group(&s);
        assert!((0.45..=0.55).contains(&cost.mean_delay_per_packet), "seed {seed}: {}", cost.mean_delay_per_packet);
    }
}

#[test]
fn dummy_bytes_are_exact_over_a_dataset() {
    let pack = default_pack();
    let ds = generate_dataset(&pack.group("app-high")[..4], 3, 30.0, 2);
    let source = SizeSource::from_dataset(&ds);
    for (i, s) in ds.samples.iter().enumerate() {
        let (out, cost) = add_dummies(s, 6.0, 300, &source, i as u64).unwrap();
        assert_eq!(out.packets.len(), s.packets.len() + 300);
        assert_eq!(out.total_payload() - s.total_payload(), cost.dummy_bytes);
    }
    let pad = defend_dataset(&ds, &Defense::Pad, &source, 1).unwrap();
    assert!(pad.costs.iter().all(|c| c.mean_delay_per_packet == 0.0 && c.dummy_bytes == 0));
    let dg = defend_dataset(&ds, &Defense::DelayGroup, &source, 1).unwrap();
    assert!(dg.costs.iter().all(|c| c.padding_bytes == 0 && c.dummy_bytes == 0));
}
