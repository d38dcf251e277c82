import json

import pytest

from coordination.corridor import ReservationEvent
from scenarios.trajectory_log import (
    TrajectoryLog,
    TrajectoryRecord,
    format_float,
    read_trajectory_csv,
    round_floats,
    write_metrics_json,
    write_reservation_csv,
    write_trajectory_csv,
)


@pytest.fixture
def log():
    return TrajectoryLog([
        TrajectoryRecord(0, 1, 4.5, 0.5, 3.141592653589793, "active"),
        TrajectoryRecord(0, 0, 0.5, 0.5, 0.0, "active"),
        TrajectoryRecord(1, 0, 0.8333333333, 0.5, 0.0, "active"),
        TrajectoryRecord(1, 1, 4.5, 0.5, 3.141592653589793, "active"),
        TrajectoryRecord(2, 0, 1.1666666667, 0.5, 0.0, "reached"),
    ])


def test_float_formatting():
    assert format_float(1.0 / 3.0) == "0.333333"
    assert format_float(-1e-9) == "0.000000"
    assert round_floats({"a": -0.0, "b": [1.23456789, 2], "c": "x"}) == {"a": 0.0, "b": [1.234568, 2], "c": "x"}


def test_trajectory_csv_layout(log, tmp_path):
    path = write_trajectory_csv(log, tmp_path / "trajectory.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "step,agent_id,x,y,theta,status"
    assert lines[1] == "0,0,0.500000,0.500000,0.000000,active"
    assert lines[2] == "0,1,4.500000,0.500000,3.141593,active"
    assert lines[-1] == "2,0,1.166667,0.500000,0.000000,reached"


def test_trajectory_csv_reads_back(log, tmp_path):
    path = write_trajectory_csv(log, tmp_path / "trajectory.csv")
    loaded = read_trajectory_csv(path)
    assert len(loaded) == len(log)
    assert loaded.final_records()[0].status == "reached"
    assert loaded.final_records()[1].x == pytest.approx(4.5)


def test_wrong_header_rejected(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_trajectory_csv(path)


def test_contiguity(log):
    assert log.is_contiguous()
    log.append(TrajectoryRecord(3, 0, 1.5, 0.5, 0.0, "reached"))
    assert not log.is_contiguous()
    gap = TrajectoryLog([TrajectoryRecord(0, 0, 0.5, 0.5, 0.0, "active"),
                         TrajectoryRecord(2, 0, 0.5, 0.5, 0.0, "active")])
    assert not gap.is_contiguous()


def test_polylines_skip_repeated_positions(log):
    lines = log.polylines()
    assert lines[1] == [(4.5, 0.5)]
    assert len(lines[0]) == 3


def test_reservation_csv(tmp_path):
    events = [ReservationEvent(0.5, 2, "c1", "a->b", "granted_new", 1.0, 4.25)]
    text = write_reservation_csv(events, tmp_path / "reservations.csv").read_text()
    assert text == ("time,agent_id,corridor_id,direction,decision,start_time,end_time\n"
                    "0.500000,2,c1,a->b,granted_new,1.000000,4.250000\n")


def test_metrics_json_is_sorted_and_rounded(tmp_path):
    class Stub:
        def to_dict(self):
            return {"b": 2.0 / 3.0, "a": 1}

    text = write_metrics_json(Stub(), tmp_path / "metrics.json").read_text()
    assert text == '{\n  "a": 1,\n  "b": 0.666667\n}\n'
    assert json.loads(text)["b"] == 0.666667
