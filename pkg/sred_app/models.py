from django.db import models


class TrainingRun(models.Model):
    """One denoiser training run and its selected checkpoint"""
    mode = models.CharField(max_length=32, verbose_name="Training mode")
    seed = models.BigIntegerField(default=0, verbose_name="Seed")
    epochs = models.IntegerField(default=0, verbose_name="Epochs requested")
    batch_size = models.IntegerField(default=16, verbose_name="Batch size")
    learning_rate = models.FloatField(default=1e-4, verbose_name="Learning rate")
    samples = models.IntegerField(default=0, verbose_name="Training windows")
    steps = models.IntegerField(default=0, verbose_name="Optimizer steps")
    best_epoch = models.IntegerField(default=0, verbose_name="Best epoch")
    best_val_l1 = models.FloatField(null=True, blank=True, verbose_name="Best validation L1")
    test_l1 = models.FloatField(null=True, blank=True, verbose_name="Test L1")
    weights_path = models.CharField(max_length=500, blank=True, verbose_name="Weight file")
    started_at = models.DateTimeField(auto_now_add=True, verbose_name="Started")

    class Meta:
        verbose_name = "Training run"
        verbose_name_plural = "Training runs"
        ordering = ['-started_at']

    def __str__(self):
        return f"{self.mode} seed={self.seed} ({self.started_at.strftime('%d.%m.%Y %H:%M')})"


class EpochLog(models.Model):
    run = models.ForeignKey(
        TrainingRun, on_delete=models.CASCADE,
        related_name='epoch_logs', verbose_name="Training run"
    )
    epoch = models.IntegerField(verbose_name="Epoch")
    train_l1 = models.FloatField(verbose_name="Training L1")
    val_l1 = models.FloatField(null=True, blank=True, verbose_name="Validation L1")
    wall_seconds = models.FloatField(default=0.0, verbose_name="Wall time (s)")

    class Meta:
        verbose_name = "Epoch log"
        verbose_name_plural = "Epoch logs"
        ordering = ['run', 'epoch']

    def __str__(self):
        return f"{self.run_id}:{self.epoch} train={self.train_l1:.6f}"


class EvaluationReport(models.Model):
    """Aggregate metrics of one method on one dataset; per-frame rows live in the CSV"""
    method = models.CharField(max_length=32, verbose_name="Method", db_index=True)
    dataset = models.CharField(max_length=200, verbose_name="Dataset")
    seed = models.BigIntegerField(default=0, verbose_name="Seed")
    frames = models.IntegerField(default=0, verbose_name="Frames")
    mse = models.FloatField(null=True, blank=True, verbose_name="MSE")
    psnr_db = models.FloatField(null=True, blank=True, verbose_name="PSNR (dB)")
    ssim = models.FloatField(null=True, blank=True, verbose_name="SSIM")
    nmid = models.FloatField(null=True, blank=True, verbose_name="NMID")
    temporal_abs = models.FloatField(null=True, blank=True, verbose_name="Temporal |diff|")
    temporal_signed = models.FloatField(null=True, blank=True, verbose_name="Temporal signed diff")
    csv_path = models.CharField(max_length=500, blank=True, verbose_name="Report file")
    created_at = models.DateTimeField(auto_now_add=True, verbose_name="Created")

    class Meta:
        verbose_name = "Evaluation report"
        verbose_name_plural = "Evaluation reports"
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.method} on {self.dataset}"
