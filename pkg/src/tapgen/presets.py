"""Bundled schema and cost-model presets for the four reference datasets.

Each builder returns (FeatureSchema, CostModel) priced in the dataset's
natural units: years of effort for the census income task, standard
deviations plus region moves for the law school task, relative difficulty
weights for the health survey task, and Deutsche Marks for the credit task.
Prohibited moves (losing a degree) carry a large finite cost instead of a
constraint so descent stays differentiable.
"""
from __future__ import annotations

import numpy as np

from .actionability import (
    CostModel,
    Feature,
    FeatureSchema,
    LinearTerm,
    QuadraticTerm,
    TransitionTerm,
    TriggerTerm,
)

__all__ = [
    "PROHIBITIVE_COST",
    "EDUCATION_TRANSITION_YEARS",
    "PROFESSION_TRANSITION_YEARS",
    "REGION_TRANSITION_COST",
    "adult_income_preset",
    "law_school_preset",
    "diabetes_preset",
    "german_credit_preset",
    "get_preset",
]

PROHIBITIVE_COST = 1000.0
_L = PROHIBITIVE_COST

# Years to move between education levels, ordered: any schooling, high school,
# professional degree, some college, associate's, bachelor's, master's,
# doctorate.  Downgrades are priced prohibitively.
EDUCATION_TRANSITION_YEARS = np.array([
    [0, 2, 10, 3, 4, 6, 8, 11],
    [_L, 0, 8, 1, 2, 4, 6, 9],
    [_L, _L, 0, _L, _L, _L, 2, 5],
    [_L, _L, 7, 0, 1, 3, 5, 8],
    [_L, _L, 6, _L, 0, 2, 4, 7],
    [_L, _L, 4, _L, _L, 0, 2, 5],
    [_L, _L, 4, _L, _L, _L, 0, 3],
    [_L, _L, 4, _L, _L, _L, _L, 0],
], dtype=float)

# Any move between fields of work costs about a year; ordered: service,
# sales, blue collar, white collar, professional, other.
PROFESSION_TRANSITION_YEARS = np.array([
    [0, 1, 2, 3, 4, 1],
    [1, 0, 1, 2, 3, 1],
    [1, 1, 0, 1, 2, 1],
    [1, 1, 1, 0, 1, 1],
    [1, 1, 1, 1, 0, 1],
    [1, 1, 1, 1, 1, 0],
], dtype=float)

# Relocation cost between the eight exam regions, adjacent moves cost 1;
# ordered: far west, great lakes, mid-south, mountain west, mid-west,
# north east, new england, north west.
REGION_TRANSITION_COST = np.array([
    [0, 3, 4, 1, 2, 6, 5, 1],
    [3, 0, 1, 2, 1, 2, 1, 3],
    [4, 1, 0, 2, 1, 2, 1, 5],
    [1, 2, 2, 0, 1, 4, 3, 2],
    [2, 1, 1, 1, 0, 3, 2, 3],
    [6, 2, 2, 4, 3, 0, 1, 5],
    [5, 1, 1, 3, 2, 1, 0, 5],
    [1, 3, 5, 2, 3, 5, 5, 0],
], dtype=float)

_EDUCATION_LEVELS = (
    "any_schooling", "high_school", "professional_degree", "some_college",
    "associates", "bachelors", "masters", "doctorate",
)
_PROFESSIONS = ("service", "sales", "blue_collar", "white_collar",
                "professional", "other")
_EMPLOYERS = ("government", "private", "self_employed", "other")
_REGIONS = ("far_west", "great_lakes", "mid_south", "mountain_west",
            "mid_west", "north_east", "new_england", "north_west")


def _onehot_block(group: str, categories, mutable=True):
    return tuple(
        Feature(f"{group}_{c}", "onehot", 0.0, 1.0, mutable=mutable,
                group=group, category=c)
        for c in categories
    )


def adult_income_preset() -> tuple[FeatureSchema, CostModel]:
    """Census income task: hours, employer, education and field are actionable."""
    features = (
        Feature("age", "integer", 17, 90, mutable=False),
        Feature("hours_per_week", "integer", 1, 99),
        *_onehot_block("employer", _EMPLOYERS),
        *_onehot_block("education", _EDUCATION_LEVELS),
        *_onehot_block("profession", _PROFESSIONS),
    )
    schema = FeatureSchema(features, label_column="income",
                           class_labels=("under_50k", "over_50k"))
    cm = CostModel(
        quadratic=(QuadraticTerm("hours_per_week", 0.1),),
        transitions=(
            TransitionTerm("employer", 1.0 - np.eye(4), "years"),
            TransitionTerm("education", EDUCATION_TRANSITION_YEARS, "years"),
            TransitionTerm("profession", PROFESSION_TRANSITION_YEARS, "years"),
        ),
    )
    return schema, cm


def law_school_preset() -> tuple[FeatureSchema, CostModel]:
    """Bar exam task: grades (in sigma units) and exam region are actionable."""
    features = (
        Feature("undergrad_gpa", "numeric", -4.0, 4.0, mutable=False),
        Feature("law_grades", "numeric", -4.0, 4.0),
        *_onehot_block("region", _REGIONS),
    )
    schema = FeatureSchema(features, label_column="passed_bar",
                           class_labels=("failed", "passed"))
    cm = CostModel(
        quadratic=(QuadraticTerm("law_grades", 1.0),),
        transitions=(TransitionTerm("region", REGION_TRANSITION_COST,
                                    "adjacent_moves"),),
    )
    return schema, cm


def diabetes_preset() -> tuple[FeatureSchema, CostModel]:
    """Health survey task: weighted squared changes, habits cheaper than income."""
    features = (
        Feature("age_bracket", "integer", 1, 13, mutable=False),
        Feature("bmi", "numeric", 12.0, 60.0),
        Feature("physical_activity", "boolean", 0, 1),
        Feature("fruit_intake", "boolean", 0, 1),
        Feature("vegetable_intake", "boolean", 0, 1),
        Feature("heavy_drinking", "boolean", 0, 1),
        Feature("education_level", "integer", 1, 6),
        Feature("income_bracket", "integer", 1, 8),
        Feature("has_insurance", "boolean", 0, 1),
    )
    schema = FeatureSchema(features, label_column="diabetic",
                           class_labels=("not_diabetic", "diabetic"))
    cm = CostModel(
        quadratic=(
            QuadraticTerm("bmi", 1.0),
            QuadraticTerm("physical_activity", 1.0),
            QuadraticTerm("fruit_intake", 1.0),
            QuadraticTerm("vegetable_intake", 1.0),
            QuadraticTerm("heavy_drinking", 1.0),
            QuadraticTerm("education_level", 4.0),
            QuadraticTerm("income_bracket", 4.0),
            QuadraticTerm("has_insurance", 4.0),
        ),
    )
    return schema, cm


def german_credit_preset(duration_dm_per_month: float = 100.0
                         ) -> tuple[FeatureSchema, CostModel]:
    """Credit risk task priced in Deutsche Marks.

    Raising a balance costs its DM amount; shrinking the requested loan or
    its duration costs the money given up, with duration converted to DM
    through the applicant's monthly disposable income
    (``duration_dm_per_month``, exposed because it varies per individual).
    Acquiring a telephone costs a flat 50 DM while dropping it, like closing
    an account that holds nothing, is free.
    """
    features = (
        Feature("age", "integer", 18, 80, mutable=False),
        Feature("checking_balance_dm", "numeric", 0.0, 100000.0),
        Feature("savings_balance_dm", "numeric", 0.0, 100000.0),
        Feature("loan_amount_dm", "numeric", 0.0, 20000.0),
        Feature("loan_duration_months", "integer", 4, 72),
        Feature("has_telephone", "boolean", 0, 1),
    )
    schema = FeatureSchema(features, label_column="credit_risk",
                           class_labels=("bad", "good"))
    cm = CostModel(
        linear=(
            LinearTerm("checking_balance_dm", 1.0),
            LinearTerm("savings_balance_dm", 1.0),
            LinearTerm("loan_amount_dm", -1.0),
            LinearTerm("loan_duration_months", -duration_dm_per_month),
        ),
        triggers=(TriggerTerm("has_telephone", 50.0),),
    )
    return schema, cm


_PRESETS = {
    "adult_income": adult_income_preset,
    "law_school": law_school_preset,
    "diabetes": diabetes_preset,
    "german_credit": german_credit_preset,
}


def get_preset(name: str):
    try:
        return _PRESETS[name]()
    except KeyError:
        raise ValueError(
            f"unknown preset {name!r}; choose from {sorted(_PRESETS)}"
        ) from None
