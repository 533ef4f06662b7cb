from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='IterationRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('run_label', models.CharField(help_text='Output directory or label of the run.', max_length=255)),
                ('method', models.CharField(choices=[('proposed', 'Proposed'), ('baseline', 'Baseline')], default='proposed', max_length=20)),
                ('iteration', models.PositiveIntegerField()),
                ('cost', models.FloatField(help_text='Discounted closed-loop cost of the iteration.')),
                ('undiscounted_cost', models.FloatField()),
                ('tail_bound', models.FloatField(default=0.0)),
                ('steps', models.PositiveIntegerField(default=0)),
                ('mean_solve_ms', models.FloatField(blank=True, null=True)),
                ('total_solve_ms', models.FloatField(blank=True, null=True)),
                ('delta1_max', models.FloatField(blank=True, null=True)),
                ('delta2', models.FloatField(blank=True, null=True)),
                ('containment_fraction', models.FloatField(blank=True, null=True)),
                ('violation_rate', models.FloatField(blank=True, null=True)),
                ('goal_error', models.FloatField(blank=True, null=True)),
                ('trend_ok', models.BooleanField(blank=True, null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'verbose_name': 'Iteration record',
                'verbose_name_plural': 'Iteration records',
                'ordering': ['run_label', 'method', 'iteration'],
            },
        ),
        migrations.AddConstraint(
            model_name='iterationrecord',
            constraint=models.UniqueConstraint(fields=('run_label', 'method', 'iteration'), name='unique_run_iteration'),
        ),
    ]
