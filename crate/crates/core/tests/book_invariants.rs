//! Order book conservation and uncrossed-book invariants under random
//! submit/cancel streams.

mod common;

use common::{apply, Ledger, Op};
use proptest::prelude::*;
use spoofsim::book::{LimitOrder, OrderBook, Qty, Side};
use spoofsim::kernel::SimTime;

#[test]
fn one_million_operations_conserve_quantity_and_never_cross() {
    let ledger = common::book_stream(1_000_000, 0xB00C, 50_000).unwrap();
    assert!(ledger.traded > 0 && ledger.cancelled > 0);
}

fn op_strategy() -> impl Strategy<Value = (bool, bool, i64, Qty, u64)> {
    (any::<bool>(), any::<bool>(), 95i64..=105, 1u64..50, 0u64..200)
}

proptest! {
    #[test]
    fn random_streams_keep_every_invariant(ops in prop::collection::vec(op_strategy(), 1..300)) {
        let mut book = OrderBook::new();
        let mut ledger = Ledger::default();
        let mut next_id = 0;
        for (t, (cancel, buy, price, qty, id)) in ops.into_iter().enumerate() {
            let op = if cancel {
                Op::Cancel(id)
            } else {
                Op::Submit { side: if buy { Side::Buy } else { Side::Sell }, price, qty }
            };
            prop_assert!(apply(&mut book, &mut ledger, &mut next_id, op, t as u64).is_ok());
            prop_assert!(book.check_invariants().is_ok());
            prop_assert!(ledger.balanced(&book));
        }
    }

    #[test]
    fn cancelling_everything_empties_the_book(
        orders in prop::collection::vec((any::<bool>(), 95i64..=105, 1u64..50), 1..100)
    ) {
        let mut book = OrderBook::new();
        for (i, (buy, price, qty)) in orders.iter().enumerate() {
            book.submit(LimitOrder {
                id: i as u64 + 1,
                agent: 0,
                side: if *buy { Side::Buy } else { Side::Sell },
                price: *price,
                qty: *qty,
                entry_time: SimTime(i as u64),
            }).unwrap();
        }
        for id in 1..=orders.len() as u64 {
            book.cancel(id);
        }
        prop_assert_eq!(book.resting_count(), 0);
        prop_assert!(book.best_bid().is_none() && book.best_ask().is_none());
    }
}
