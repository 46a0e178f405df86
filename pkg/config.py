import os
from dotenv import load_dotenv

load_dotenv()

# Giới hạn luồng BLAS phải được đặt trước khi numpy được import lần đầu
_THREADS = os.getenv('CRAFT_THREADS', '1')
for _var in ('OMP_NUM_THREADS', 'OPENBLAS_NUM_THREADS', 'MKL_NUM_THREADS'):
    os.environ.setdefault(_var, _THREADS)


class Config:
    """
    Cấu hình chung cho bộ công cụ CRAFT:
    - Tài nguyên tính toán và logging
    - Dữ liệu tổng hợp / calibration
    - Mặc định cho PTQ (FGO + ADC + BR)
    """

    # ---------------- Runtime ----------------
    CRAFT_THREADS = int(_THREADS)
    CRAFT_SEED = int(os.getenv('CRAFT_SEED', 0))
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    LOG_FILE = os.getenv('LOG_FILE', 'craft.log')

    # ---------------- Dữ liệu ----------------
    SYNTHETIC_COUNT = int(os.getenv('SYNTHETIC_COUNT', 24))
    SYNTHETIC_SIZE = int(os.getenv('SYNTHETIC_SIZE', 96))
    CALIB_SAMPLES = int(os.getenv('CALIB_SAMPLES', 100))
    CALIB_PATCH = int(os.getenv('CALIB_PATCH', 120))

    # ---------------- Training ----------------
    TRAIN_LOG_EVERY = int(os.getenv('TRAIN_LOG_EVERY', 100))

    # ---------------- PTQ ----------------
    PTQ_EPOCHS = int(os.getenv('PTQ_EPOCHS', 10))
    PTQ_BATCH = int(os.getenv('PTQ_BATCH', 2))
    PTQ_BETA = float(os.getenv('PTQ_BETA', 0.9))
    PTQ_LR_8BIT = float(os.getenv('PTQ_LR_8BIT', 2e-4))
    PTQ_LR_LOW_BIT = float(os.getenv('PTQ_LR_LOW_BIT', 2e-3))
    PERCENTILE = float(os.getenv('PERCENTILE', 0.999))

    # ---------------- Metrics ----------------
    PSNR_CAP_DB = float(os.getenv('PSNR_CAP_DB', 100.0))

    # ---------------- Validation ----------------
    @classmethod
    def validate_config(cls):
        """Kiểm tra các cấu hình, gom toàn bộ lỗi rồi báo một lần"""
        errors = []

        if cls.CRAFT_THREADS < 1:
            errors.append(f"❌ CRAFT_THREADS phải >= 1 (hiện tại {cls.CRAFT_THREADS})")
        if not 0.0 <= cls.PTQ_BETA < 1.0:
            errors.append(f"❌ PTQ_BETA phải nằm trong [0, 1) (hiện tại {cls.PTQ_BETA})")
        if not 0.0 < cls.PERCENTILE <= 1.0:
            errors.append(f"❌ PERCENTILE phải nằm trong (0, 1] (hiện tại {cls.PERCENTILE})")
        for name in ('SYNTHETIC_COUNT', 'SYNTHETIC_SIZE', 'CALIB_SAMPLES',
                     'CALIB_PATCH', 'PTQ_BATCH', 'TRAIN_LOG_EVERY'):
            if getattr(cls, name) < 1:
                errors.append(f"❌ {name} phải là số dương")
        if cls.PTQ_EPOCHS < 0:
            errors.append("❌ PTQ_EPOCHS không được âm")

        if errors:
            raise ValueError("\n".join(errors))

        return True


# Khởi tạo config
config = Config()
