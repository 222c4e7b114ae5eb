//! Rarest-first piece choice and block scheduling for one downloader.

use swarmsim::pieces::{BlockBook, PiecePolicy, RarityTable};
use swarmsim::sim::rng_from_seed;
use swarmsim::swarm::Bitfield;
use swarmsim::PeerId;

fn main() {
    let pieces = 8;
    let mut rng = rng_from_seed(3);
    let neighbors = [
        Bitfield::from_pieces(pieces, [0, 1, 2, 3, 4, 5, 6, 7]),
        Bitfield::from_pieces(pieces, [0, 1, 2, 5]),
        Bitfield::from_pieces(pieces, [1, 2, 5, 6]),
    ];
    let mut rarity = RarityTable::new(pieces);
    for n in &neighbors {
        rarity.add_bitfield(n);
    }
    let local = Bitfield::from_pieces(pieces, [2]);
    println!("copy counts {:?}", rarity.counts());
    println!("rarest set {:?}", rarity.rarest_set(&local));

    let uploader = &neighbors[0];
    let det = rarity.select_piece(&local, uploader, |_| false, PiecePolicy::Deterministic, &mut rng);
    let draws: Vec<_> = (0..8)
        .filter_map(|_| rarity.select_piece(&local, uploader, |_| false, PiecePolicy::Randomized, &mut rng))
        .collect();
    println!("deterministic pick {det:?}, randomized picks {draws:?}");

    // Fill a five-deep request pipeline, then pretend two blocks arrived.
    let mut book = BlockBook::new(pieces, 4);
    let mut pipeline = Vec::new();
    for _ in 0..5 {
        let b = book
            .next_block(&local, uploader, &rarity, PiecePolicy::Deterministic, &mut rng)
            .expect("uploader has pieces we lack");
        book.mark_requested(b, PeerId(1));
        pipeline.push(b);
    }
    println!("requested {pipeline:?}");
    for b in &pipeline[..2] {
        book.mark_received(*b);
    }
    println!("partial pieces {:?}", book.started());

    // A neighbor announces piece 7, which is no longer the rarest.
    rarity.add_have(7);
    println!("after have(7): rarest set {:?}", rarity.rarest_set(&local));
}
