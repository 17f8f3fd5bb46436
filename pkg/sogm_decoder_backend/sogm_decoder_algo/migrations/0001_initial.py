# Generated by Django 5.1.5 on 2026-10-17 09:12

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('run_id', models.CharField(max_length=64, unique=True)),
                ('command', models.CharField(max_length=32)),
                ('config', models.JSONField(default=dict)),
                ('seed', models.BigIntegerField(default=0)),
                ('tool_version', models.CharField(max_length=32)),
                ('created', models.DateTimeField(auto_now_add=True)),
                ('artifact_dir', models.CharField(blank=True, max_length=500)),
            ],
        ),
        migrations.CreateModel(
            name='ExperimentScore',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('representation', models.CharField(max_length=16)),
                ('classifier', models.CharField(max_length=16)),
                ('bakis_length', models.PositiveIntegerField()),
                ('repeat', models.PositiveIntegerField(default=0)),
                ('macro_f1', models.FloatField()),
                ('per_class_f1', models.JSONField(default=dict)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='scores', to='sogm_decoder_algo.experimentrun')),
            ],
            options={
                'unique_together': {('run', 'representation', 'classifier', 'bakis_length', 'repeat')},
            },
        ),
    ]
