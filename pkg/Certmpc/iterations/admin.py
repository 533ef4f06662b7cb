from django.contrib import admin
from .models import IterationRecord


class IterationRecordAdmin(admin.ModelAdmin):
    """Iteration ledger admin configuration."""
    list_display = ('run_label', 'method', 'iteration', 'cost', 'undiscounted_cost', 'mean_solve_ms',
                    'violation_rate', 'trend_ok', 'created_at')
    list_filter = ('method', 'trend_ok', 'created_at')
    search_fields = ('run_label',)
    ordering = ('run_label', 'method', 'iteration')

    fieldsets = (
        (None, {'fields': ('run_label', 'method', 'iteration')}),
        ('Performance', {'fields': ('cost', 'undiscounted_cost', 'tail_bound', 'steps', 'goal_error')}),
        ('Timing', {'fields': ('mean_solve_ms', 'total_solve_ms')}),
        ('Certificate', {
            'fields': ('delta1_max', 'delta2', 'containment_fraction', 'violation_rate', 'trend_ok'),
        }),
        ('Important dates', {'fields': ('created_at',)}),
    )

    readonly_fields = ('created_at',)


admin.site.register(IterationRecord, IterationRecordAdmin)
