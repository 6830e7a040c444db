# Generated by Django 4.2 on 2026-10-19 09:12

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='EvaluationReport',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('method', models.CharField(db_index=True, max_length=32, verbose_name='Method')),
                ('dataset', models.CharField(max_length=200, verbose_name='Dataset')),
                ('seed', models.BigIntegerField(default=0, verbose_name='Seed')),
                ('frames', models.IntegerField(default=0, verbose_name='Frames')),
                ('mse', models.FloatField(blank=True, null=True, verbose_name='MSE')),
                ('psnr_db', models.FloatField(blank=True, null=True, verbose_name='PSNR (dB)')),
                ('ssim', models.FloatField(blank=True, null=True, verbose_name='SSIM')),
                ('nmid', models.FloatField(blank=True, null=True, verbose_name='NMID')),
                ('temporal_abs', models.FloatField(blank=True, null=True, verbose_name='Temporal |diff|')),
                ('temporal_signed', models.FloatField(blank=True, null=True, verbose_name='Temporal signed diff')),
                ('csv_path', models.CharField(blank=True, max_length=500, verbose_name='Report file')),
                ('created_at', models.DateTimeField(auto_now_add=True, verbose_name='Created')),
            ],
            options={
                'verbose_name': 'Evaluation report',
                'verbose_name_plural': 'Evaluation reports',
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='TrainingRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('mode', models.CharField(max_length=32, verbose_name='Training mode')),
                ('seed', models.BigIntegerField(default=0, verbose_name='Seed')),
                ('epochs', models.IntegerField(default=0, verbose_name='Epochs requested')),
                ('batch_size', models.IntegerField(default=16, verbose_name='Batch size')),
                ('learning_rate', models.FloatField(default=0.0001, verbose_name='Learning rate')),
                ('samples', models.IntegerField(default=0, verbose_name='Training windows')),
                ('steps', models.IntegerField(default=0, verbose_name='Optimizer steps')),
                ('best_epoch', models.IntegerField(default=0, verbose_name='Best epoch')),
                ('best_val_l1', models.FloatField(blank=True, null=True, verbose_name='Best validation L1')),
                ('test_l1', models.FloatField(blank=True, null=True, verbose_name='Test L1')),
                ('weights_path', models.CharField(blank=True, max_length=500, verbose_name='Weight file')),
                ('started_at', models.DateTimeField(auto_now_add=True, verbose_name='Started')),
            ],
            options={
                'verbose_name': 'Training run',
                'verbose_name_plural': 'Training runs',
                'ordering': ['-started_at'],
            },
        ),
        migrations.CreateModel(
            name='EpochLog',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('epoch', models.IntegerField(verbose_name='Epoch')),
                ('train_l1', models.FloatField(verbose_name='Training L1')),
                ('val_l1', models.FloatField(blank=True, null=True, verbose_name='Validation L1')),
                ('wall_seconds', models.FloatField(default=0.0, verbose_name='Wall time (s)')),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='epoch_logs', to='sred_app.trainingrun', verbose_name='Training run')),
            ],
            options={
                'verbose_name': 'Epoch log',
                'verbose_name_plural': 'Epoch logs',
                'ordering': ['run', 'epoch'],
            },
        ),
    ]
