"""
Trial records and the object-grouped dataset.

Covers:
1. JSONL persistence keeps every field
2. Object folds are disjoint, cover the registry and balance objects across folds; held-out splits are seeded
3. Registry checks and class balance
4. Array export shapes
"""

import json

import numpy as np
import pytest

from dataset import Dataset, record_from_dict, record_to_dict
from errors import FoldError, MissingInputError
from tests.helpers import synthetic_records


@pytest.fixture
def records():
    return synthetic_records(n_objects=5, per_object=4, seed=2)


def test_record_dict_keeps_every_field(records):
    payload = record_to_dict(records[0])
    restored = record_from_dict(json.loads(json.dumps(payload)))
    assert restored.episode_id == records[0].episode_id
    assert restored.object_id == records[0].object_id
    assert restored.action == records[0].action
    assert restored.outcome == records[0].outcome
    assert restored.state.pose == records[0].state.pose
    assert np.array_equal(restored.state.vision, records[0].state.vision)
    assert record_to_dict(restored) == payload


def test_unknown_schema_version_is_rejected(records):
    payload = record_to_dict(records[0])
    payload["schema_version"] = 99
    with pytest.raises(ValueError):
        record_from_dict(payload)


def test_jsonl_round_trip(tmp_path, records):
    path = tmp_path / "nested" / "data.jsonl"
    Dataset(records).to_jsonl(path)
    loaded = Dataset.from_jsonl(path)
    assert len(loaded) == len(records)
    assert [record_to_dict(r) for r in loaded] == [record_to_dict(r) for r in records]


def test_missing_and_corrupt_files(tmp_path):
    with pytest.raises(MissingInputError):
        Dataset.from_jsonl(tmp_path / "absent.jsonl")
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"pose": [0, 0, 0, 0]}\n', encoding="utf-8")
    with pytest.raises(ValueError, match="bad.jsonl:1"):
        Dataset.from_jsonl(bad)


def test_object_folds_are_disjoint_and_cover(records):
    dataset = Dataset(records)
    folds = dataset.object_folds(3, seed=4)
    assert len(folds) == 3
    seen = []
    for train_ids, test_ids in folds:
        assert not set(train_ids) & set(test_ids)
        assert set(train_ids) | set(test_ids) == set(dataset.object_ids)
        seen.extend(test_ids)
    assert sorted(seen) == sorted(dataset.object_ids)
    assert folds == dataset.object_folds(3, seed=4)


def test_folds_balance_objects_across_folds(records):
    folds = Dataset(records).object_folds(3, seed=9)
    assert sorted(len(test_ids) for _, test_ids in folds) == [1, 2, 2]
    three = Dataset([r for r in records if r.object_id in {"obj0", "obj1", "obj2"}], objects=["obj0", "obj1", "obj2"])
    assert sorted(test_ids[0] for _, test_ids in three.object_folds(3, seed=9)) == ["obj0", "obj1", "obj2"]


def test_fold_count_limits(records):
    dataset = Dataset(records)
    with pytest.raises(FoldError):
        dataset.object_folds(1)
    with pytest.raises(FoldError):
        dataset.object_folds(6)


def test_split_objects_holds_out_whole_objects(records):
    train, held = Dataset(records).split_objects(0.4, seed=1)
    assert len(held.object_ids) == 2
    assert not set(train.object_ids) & set(held.object_ids)
    assert len(train) + len(held) == len(records)
    again_train, again_held = Dataset(records).split_objects(0.4, seed=1)
    assert again_held.object_ids == held.object_ids and again_train.object_ids == train.object_ids
    with pytest.raises(FoldError):
        Dataset(records[:4]).split_objects(0.5)


def test_unregistered_objects_are_rejected(records):
    with pytest.raises(ValueError, match="unregistered"):
        Dataset(records, objects=["obj0"])


def test_registry_may_list_unused_objects(records):
    dataset = Dataset(records[:4], objects=["obj0", "spare"])
    assert dataset.objects == ["obj0", "spare"]
    assert dataset.object_ids == ["obj0"]


def test_class_balance(records):
    dataset = Dataset(records)
    balance = dataset.class_balance()
    assert balance["success"] + balance["failure"] == len(records)
    assert balance["success"] == int(dataset.labels().sum())
    assert dataset.positive_rate() == pytest.approx(balance["success"] / len(records))
    assert Dataset([]).positive_rate() == 0.0


def test_to_arrays_shapes(records):
    arrays = Dataset(records).to_arrays()
    n = len(records)
    assert arrays["vision"].shape == (n, 1, 24, 24)
    assert arrays["vision"].dtype == np.float32
    assert arrays["tactile_left"].shape == arrays["tactile_right"].shape == (n, 1, 16, 16)
    assert arrays["action"].shape == (n, 5)
    assert arrays["pose"].shape == (n, 4)
    assert arrays["labels"].shape == (n,)
    with pytest.raises(ValueError):
        Dataset([]).to_arrays()


def test_subset_and_concat(records):
    dataset = Dataset(records)
    left = dataset.subset(["obj0", "obj1"])
    right = dataset.subset(["obj2", "obj3", "obj4"])
    joined = left.concat(right)
    assert len(joined) == len(dataset)
    assert sorted(joined.objects) == sorted(dataset.objects)
