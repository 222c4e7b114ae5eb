//! Single choking rounds on hand-built neighbor tables.

use swarmsim::choking::{leecher_round, optimistic_plan, seed_round, Candidate, LeecherChokeState};
use swarmsim::PeerId;

fn peer(id: u32, rate: f64) -> Candidate {
    Candidate {
        interested: true,
        rate,
        ..Candidate::new(PeerId(id))
    }
}

fn main() {
    // Leecher with four upload slots: the three fastest uploaders to us get
    // regular unchokes, the draw order picks the optimistic one.
    let table = vec![
        peer(1, 48.0),
        peer(2, 12.5),
        Candidate {
            snubbed: true,
            ..peer(3, 0.0)
        },
        peer(4, 31.0),
        peer(5, 7.0),
        Candidate::new(PeerId(6)),
        peer(7, 0.0),
    ];
    let mut state = LeecherChokeState::default();
    let draw = [PeerId(6), PeerId(3), PeerId(7), PeerId(5)];
    let d = leecher_round(4, &mut state, &table, true, &draw);
    println!("leecher: regular {:?} optimistic {:?} uninterested but unchoked {:?}", d.regular, d.optimistic, d.extra);

    // A later non-rotation round keeps the optimistic peer.
    let d = leecher_round(4, &mut state, &table, false, &[PeerId(5)]);
    println!("leecher, next round: optimistic {:?}", d.optimistic);

    // Seed: most recently unchoked leechers first, n_o slots left for new ones.
    let plan = optimistic_plan(4);
    println!("seed optimistic unchokes per 30 s: {:?}", plan.counts);
    let now = 100.0;
    let seed_table: Vec<Candidate> = [
        (1, Some(95.0), false),
        (2, Some(70.0), true),
        (3, Some(85.0), false),
        (4, Some(92.0), false),
        (5, None, false),
        (6, None, false),
    ]
        .into_iter()
        .map(|(id, last, pending)| Candidate {
            interested: true,
            unchoked: last.is_some(),
            last_unchoked_at: last,
            pending_requests: pending,
            ..Candidate::new(PeerId(id))
        })
        .collect();
    for round in 0..3 {
        let n_o = plan.for_round(round);
        let d = seed_round(4, n_o, 20.0, now, &seed_table, &[PeerId(6), PeerId(5)]);
        println!("seed round {round} (n_o={n_o}): regular {:?} optimistic {:?}", d.regular, d.optimistic);
    }
}
