import csv
import io

import pytest

from optidamp.bench import (BENCH_COLUMNS, REFERENCE, BenchCase, expected_eigs, format_table,
                            run_case, run_suite, suite_cases, write_csv)


class TestSuites:
    def test_case_counts(self):
        assert len(suite_cases("table2")) == 18
        assert len(suite_cases("table3")) == 7
        assert len(suite_cases("all")) == 25
        assert {c.stopping for c in suite_cases("table3")} == {"foda"}

    def test_unknown(self):
        with pytest.raises(ValueError):
            suite_cases("")

    def test_reference_published_values(self):
        assert REFERENCE[("table3", "damp1-a", 1.0, "spg")]["nu"] == (4.4,)
        assert REFERENCE[("table2", "damp2-c", 100.0, "spg")]["f"] == 3.8e3


class TestRows:
    def test_golden_columns(self):
        buf = io.StringIO()
        write_csv([], buf)
        assert buf.getvalue().strip() == ",".join(BENCH_COLUMNS)

    def test_row_reconciles(self):
        row = run_case(BenchCase("damp1-b", 1.0, "spg", "paper", "table2"))
        assert row["status"] == "ok" and row["reconciled"]
        assert row["eig_count"] == row["counter_delta"] == row["history_eigs"]
        assert set(row) == set(BENCH_COLUMNS)

    def test_skip_large(self):
        row = run_case(BenchCase("beam-a", 1.0, "spg", "paper", "table2"), max_n=20)
        assert row["status"].startswith("skipped")

    def test_error_row(self):
        row = run_case(BenchCase("damp2-a", 100.0, "spg", "paper", "table2"))
        assert row["status"].startswith("error: InputError")

    def test_threads_reconcile(self):
        rows = run_suite("table2", max_n=20, threads=4)
        ok = [r for r in rows if r["status"] == "ok"]
        assert len(ok) == 8
        assert all(r["reconciled"] for r in ok)

    def test_csv_quoting(self):
        row = run_case(BenchCase("damp2-a", 100.0, "spg", "paper", "table2"))
        buf = io.StringIO()
        write_csv([row], buf)
        back = list(csv.DictReader(io.StringIO(buf.getvalue())))
        assert back[0]["status"] == row["status"]

    def test_table(self):
        row = run_case(BenchCase("damp1-a", 1.0, "spg", "foda", "table3"))
        text = format_table([row])
        assert text.splitlines()[0].startswith("problem")
        assert "damp1-a" in text


class TestExpectedEigs:
    def test_bbrma(self):
        class R:
            method, iterations, history = "bbrma", 5, []
        assert expected_eigs(R) == 6
