//! Authenticated additive sharing, a Beaver multiplication and the batched
//! MAC check, run over the simulated network.

use smartbill::field::{FieldElement, MERSENNE_61};
use smartbill::mpc::{offline_deal, MacCheck, OpenKind, Schedule, Session};
use smartbill::simnet::SimNet;

fn main() {
    let n_parties = 3;
    // two input masks and one triple, dealt from a fixed seed
    let material = offline_deal::<MERSENNE_61>(2, 1, n_parties, 7);
    let alpha: FieldElement = material.key_shares.iter().map(|k| k.alpha_share).sum();

    let mut net = SimNet::new();
    let mut session = Session::offline(&material, &[2], &mut net, Schedule::Sequential, 7).unwrap();
    let xs = session.input(0, &[FieldElement::new(6), FieldElement::new(7)]).unwrap();
    for (i, share) in xs[0].shares().iter().enumerate() {
        println!("party {i} holds value share {:>20} of x", share.value_share.value());
    }
    println!("sum of MAC shares == alpha * x: {}", xs[0].mac_sum() == alpha * xs[0].reconstruct());

    let product = session.beaver_mul(&xs[0], &xs[1], 0).unwrap();
    let opened = session.open(&product, OpenKind::Output).unwrap();
    println!("opened 6 * 7 = {}", opened.value().value());
    match session.check_macs().unwrap() {
        MacCheck::Pass => println!("MAC check passed"),
        MacCheck::Fail => println!("MAC check FAILED"),
    }
    drop(session);
    println!("{} bytes on the wire, transcript {}", net.stats().total_sent(), &net.transcript_digest()[..16]);
}
