from .regressor import (BILSTM_BS, LITE_LSTM_AP, ForecastResult,
                        NotTrainedError, SequenceRegressor, TrainConfig,
                        TrainingDivergedError, evaluate_rmse,
                        load_checkpoint, save_checkpoint)
from .gradcheck import GradCheckReport, gradient_check
from .baselines import (ArBaseline, GbtBaseline, fit_ar_baseline,
                        fit_gbt_baseline)

__all__ = [
    "BILSTM_BS", "LITE_LSTM_AP", "ForecastResult", "NotTrainedError",
    "SequenceRegressor", "TrainConfig", "TrainingDivergedError",
    "evaluate_rmse", "load_checkpoint", "save_checkpoint",
    "GradCheckReport", "gradient_check",
    "ArBaseline", "GbtBaseline", "fit_ar_baseline", "fit_gbt_baseline",
]
