from django.db import models


class IterationRecord(models.Model):
    """
    Ledger entry for one completed learning iteration.
    The run directory files stay the primary artifacts; this table only indexes them.
    """
    METHOD_CHOICES = [
        ('proposed', 'Proposed'),
        ('baseline', 'Baseline'),
    ]

    run_label = models.CharField(
        max_length=255,
        help_text='Output directory or label of the run.'
    )
    method = models.CharField(max_length=20, choices=METHOD_CHOICES, default='proposed')
    iteration = models.PositiveIntegerField()
    cost = models.FloatField(help_text='Discounted closed-loop cost of the iteration.')
    undiscounted_cost = models.FloatField()
    tail_bound = models.FloatField(default=0.0)
    steps = models.PositiveIntegerField(default=0)
    mean_solve_ms = models.FloatField(null=True, blank=True)
    total_solve_ms = models.FloatField(null=True, blank=True)
    delta1_max = models.FloatField(null=True, blank=True)
    delta2 = models.FloatField(null=True, blank=True)
    containment_fraction = models.FloatField(null=True, blank=True)
    violation_rate = models.FloatField(null=True, blank=True)
    goal_error = models.FloatField(null=True, blank=True)
    trend_ok = models.BooleanField(null=True, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        verbose_name = 'Iteration record'
        verbose_name_plural = 'Iteration records'
        ordering = ['run_label', 'method', 'iteration']
        constraints = [
            models.UniqueConstraint(fields=['run_label', 'method', 'iteration'], name='unique_run_iteration'),
        ]

    def __str__(self):
        return f"{self.run_label} {self.method} #{self.iteration}: {self.cost:.4f}"

    @property
    def cost_reduction(self):
        """Relative cost change against iteration 0 of the same run and method."""
        first = IterationRecord.objects.filter(
            run_label=self.run_label, method=self.method, iteration=0
        ).first()
        if first is None or first.cost == 0:
            return None
        return 1.0 - self.cost / first.cost
