from typing import Dict, List

from pydantic import BaseModel, Field, model_validator


class Metrics(BaseModel):
    train_mse: float = Field(..., ge=0.0, description="Train MSE [W^2]")
    test_mse: float = Field(..., ge=0.0, description="Test MSE [W^2]")


class RankingRow(BaseModel):
    feature: str
    score: float = Field(..., ge=0.0, description="Mean |attribution| across cells")
    cell_scores: Dict[str, float] = Field(default_factory=dict)


class RankingTable(BaseModel):
    cells: List[str] = Field(..., description="model/explainer cell tags")
    rows: List[RankingRow]

    @model_validator(mode="after")
    def check_order(self):
        keys = [(-row.score, row.feature) for row in self.rows]
        if keys != sorted(keys):
            raise ValueError("Rows must be ordered by score desc, then name asc")
        return self

    def top(self, k: int) -> List[str]:
        return [row.feature for row in self.rows[:k]]
