"""Ingestion: parsing, grouping, and forward imputation."""
import datetime as dt
from fractions import Fraction

import pytest
from helpers import make_auction_csv

from termfit import (
    AuctionRecord,
    Dataset,
    DateObservation,
    DuplicateTenor,
    EmptyAfterImputation,
    Instrument,
    InvariantViolation,
    MalformedRow,
    MaturityGrid,
    Provenance,
    SchemaError,
    group_by_date,
    impute_forward,
    parse_auctions,
    parse_tenor,
    serialize_records,
    tenor_str,
)

D1 = dt.date(2017, 3, 15)
D2 = dt.date(2017, 3, 22)

FULL_ROWS_D1 = [
    "2017-03-15,0.25,Bill,97.80,100,0,9.12",
    "2017-03-15,0.5,Bill,95.60,100,0,9.30",
    "2017-03-15,1,Bill,91.40,100,0,9.41",
    "2017-03-15,2,Bond,100.50,100,10,9.72",
    "2017-03-15,3,Bond,101.25,100,10.5,9.98",
    "2017-03-15,4,Bond,100.00,100,10.25,10.25",
    "2017-03-15,5,Bond,99.10,100,10.4,10.63",
]
FULL_ROWS_D2 = [r.replace("2017-03-15", "2017-03-22") for r in FULL_ROWS_D1]


class TestParse:
    def test_direct_field_mapping(self):
        text = make_auction_csv(["2017-03-15,0.25,Bill,97.80,100,0,9.12"])
        (rec,) = parse_auctions(text)
        assert rec == AuctionRecord(
            D1, Fraction(1, 4), Instrument.BILL, 97.80, 100.0, 0.0, 9.12
        )

    def test_bond_with_coupon(self):
        (rec,) = parse_auctions(make_auction_csv(["2018-01-10,5,Bond,101.25,100,12.5,12.10"]))
        assert rec.instrument is Instrument.BOND
        assert rec.coupon_rate_pct == 12.5
        assert rec.maturity_years == 5

    def test_negative_maturity_is_invariant_violation(self):
        with pytest.raises(InvariantViolation) as err:
            parse_auctions(make_auction_csv(["2017-03-15,-1,Bill,97.80,100,0,9.12"]))
        assert err.value.field == "maturity_years"
        assert err.value.line == 2

    def test_negative_price_rejected(self):
        with pytest.raises(InvariantViolation):
            parse_auctions(make_auction_csv(["2017-03-15,1,Bill,-5,100,0,9.12"]))

    def test_header_mismatch_aborts(self):
        with pytest.raises(SchemaError):
            parse_auctions("date,price\n2017-03-15,97.8\n")

    def test_missing_face_value_column_defaults_to_100(self):
        text = (
            "auction_date,maturity_years,instrument,clean_price,coupon_rate_pct,reported_yield_pct\n"
            "2017-03-15,0.25,Bill,97.80,0,9.12\n"
        )
        (rec,) = parse_auctions(text)
        assert rec.face_value == 100.0

    def test_unparseable_field_is_malformed_row(self):
        with pytest.raises(MalformedRow) as err:
            parse_auctions(make_auction_csv(["2017-03-15,0.25,Bill,abc,100,0,9.12"]))
        assert err.value.line == 2

    def test_bad_instrument_name(self):
        with pytest.raises(MalformedRow):
            parse_auctions(make_auction_csv(["2017-03-15,0.25,Note,97.8,100,0,9.12"]))

    def test_bill_bond_biconditional(self):
        # coupon-free short paper must be a Bill, and Bills cannot carry coupons
        with pytest.raises(InvariantViolation):
            parse_auctions(make_auction_csv(["2017-03-15,0.5,Bond,97.8,100,0,9.12"]))
        with pytest.raises(InvariantViolation):
            parse_auctions(make_auction_csv(["2017-03-15,0.5,Bill,97.8,100,5,9.12"]))
        with pytest.raises(InvariantViolation):
            parse_auctions(make_auction_csv(["2017-03-15,3,Bill,97.8,100,0,9.12"]))

    def test_round_trip_identity(self):
        records = parse_auctions(make_auction_csv(FULL_ROWS_D1 + FULL_ROWS_D2))
        assert parse_auctions(serialize_records(records)) == records

    def test_accepts_bytes_and_file_objects(self, tmp_path):
        text = make_auction_csv(FULL_ROWS_D1)
        assert parse_auctions(text.encode()) == parse_auctions(text)
        path = tmp_path / "a.csv"
        path.write_text(text)
        with open(path) as fh:
            assert parse_auctions(fh) == parse_auctions(text)


class TestTenor:
    @pytest.mark.parametrize("text,frac", [("0.25", Fraction(1, 4)), ("5", Fraction(5)),
                                           ("1/3", Fraction(1, 3)), ("0.5", Fraction(1, 2))])
    def test_parse(self, text, frac):
        assert parse_tenor(text) == frac

    @pytest.mark.parametrize("frac,text", [(Fraction(1, 4), "0.25"), (Fraction(5), "5"),
                                           (Fraction(1, 3), "1/3"), (Fraction(1, 2), "0.5"),
                                           (Fraction(13, 52), "0.25")])
    def test_format(self, frac, text):
        assert tenor_str(frac) == text
        assert parse_tenor(tenor_str(frac)) == frac


class TestGrouping:
    def test_two_complete_dates(self):
        records = parse_auctions(make_auction_csv(FULL_ROWS_D1 + FULL_ROWS_D2))
        ds, warnings = group_by_date(records)
        assert warnings == []
        assert len(ds.observations) == 2
        assert ds.complete
        assert ds.provenance is Provenance.ORIGINAL
        assert [o.date for o in ds.observations] == [D1, D2]

    def test_duplicate_tenor_raises(self):
        rows = FULL_ROWS_D1 + ["2017-03-15,1,Bill,91.00,100,0,9.50"]
        with pytest.raises(DuplicateTenor) as err:
            group_by_date(parse_auctions(make_auction_csv(rows)))
        assert err.value.tenor == 1

    def test_off_grid_record_warned_and_excluded(self):
        rows = FULL_ROWS_D1 + ["2017-03-15,8,Bond,98.0,100,11,11.3"]
        ds, warnings = group_by_date(parse_auctions(make_auction_csv(rows)))
        assert len(warnings) == 1
        assert warnings[0].maturity_years == 8
        assert all(Fraction(8) not in o.records for o in ds.observations)

    def test_grid_invariants(self):
        with pytest.raises(InvariantViolation):
            MaturityGrid(())
        with pytest.raises(InvariantViolation):
            MaturityGrid((Fraction(1), Fraction(1)))
        with pytest.raises(InvariantViolation):
            MaturityGrid((Fraction(-1), Fraction(1)))


def _sparse_dataset():
    # d1 complete; d2 lacks the 3y tenor; d3 lacks 0.25y and 3y
    rows = list(FULL_ROWS_D1)
    rows += [r for r in FULL_ROWS_D2 if not r.startswith("2017-03-22,3,")]
    d3 = [r.replace("2017-03-15", "2017-03-29") for r in FULL_ROWS_D1
          if ",0.25," not in r and not r.startswith("2017-03-15,3,")]
    ds, _ = group_by_date(parse_auctions(make_auction_csv(rows + d3)))
    return ds


class TestImputation:
    def test_fills_from_most_recent_earlier_date(self):
        ds = _sparse_dataset()
        completed, dropped = impute_forward(ds)
        assert dropped == []
        assert completed.provenance is Provenance.IMPUTED
        assert completed.complete
        d2 = completed.observations[1]
        assert d2.imputed_tenors == frozenset({Fraction(3)})
        source = ds.observations[0].records[Fraction(3)]
        filled = d2.records[Fraction(3)]
        assert filled.auction_date == d2.date
        assert (filled.clean_price, filled.coupon_rate_pct, filled.reported_yield_pct) == (
            source.clean_price, source.coupon_rate_pct, source.reported_yield_pct
        )
        d3 = completed.observations[2]
        assert d3.imputed_tenors == frozenset({Fraction(1, 4), Fraction(3)})
        # 3y at d3 still carries d1's record: d2's 3y was itself imputed
        assert d3.records[Fraction(3)].clean_price == source.clean_price

    def test_leading_date_without_predecessor_dropped(self):
        rows = [r for r in FULL_ROWS_D1 if not r.startswith("2017-03-15,2,")] + FULL_ROWS_D2
        ds, _ = group_by_date(parse_auctions(make_auction_csv(rows)))
        completed, dropped = impute_forward(ds)
        assert [d.date for d in dropped] == [D1]
        assert dropped[0].missing_tenors == (Fraction(2),)
        assert [o.date for o in completed.observations] == [D2]

    def test_complete_dataset_identity_with_imputed_provenance(self):
        ds, _ = group_by_date(parse_auctions(make_auction_csv(FULL_ROWS_D1 + FULL_ROWS_D2)))
        completed, dropped = impute_forward(ds)
        assert dropped == []
        assert completed.provenance is Provenance.IMPUTED
        assert all(not o.imputed_tenors for o in completed.observations)
        assert [o.records for o in completed.observations] == [
            o.records for o in ds.observations
        ]

    def test_idempotent(self):
        once, _ = impute_forward(_sparse_dataset())
        twice, dropped = impute_forward(once)
        assert dropped == []
        assert twice == once

    def test_never_alters_observed_records(self):
        ds = _sparse_dataset()
        completed, _ = impute_forward(ds)
        for before, after in zip(ds.observations, completed.observations):
            for tenor, rec in before.records.items():
                assert after.records[tenor] == rec

    def test_dropped_observed_tenors_still_carry_forward(self):
        # first date is dropped (missing 2y) but its other auctions remain
        # legitimate imputation sources for later dates
        rows = [r for r in FULL_ROWS_D1 if not r.startswith("2017-03-15,2,")]
        rows += [r for r in FULL_ROWS_D2 if not r.startswith("2017-03-22,5,")]
        ds, _ = group_by_date(parse_auctions(make_auction_csv(rows)))
        completed, dropped = impute_forward(ds)
        assert [d.date for d in dropped] == [D1]
        survivor = completed.observations[0]
        assert survivor.records[Fraction(5)].clean_price == 99.10

    def test_empty_after_imputation(self):
        rows = [r for r in FULL_ROWS_D1 if not r.startswith("2017-03-15,2,")]
        ds, _ = group_by_date(parse_auctions(make_auction_csv(rows)))
        with pytest.raises(EmptyAfterImputation):
            impute_forward(ds)


class TestDatasetInvariants:
    def test_original_cannot_carry_imputed_flags(self):
        ds = _sparse_dataset()
        obs = ds.observations[0]
        flagged = DateObservation(obs.date, obs.records, frozenset({Fraction(1)}))
        with pytest.raises(InvariantViolation):
            Dataset(ds.grid, (flagged,), Provenance.ORIGINAL)

    def test_dates_strictly_increasing(self):
        ds = _sparse_dataset()
        with pytest.raises(InvariantViolation):
            Dataset(ds.grid, (ds.observations[0], ds.observations[0]))
