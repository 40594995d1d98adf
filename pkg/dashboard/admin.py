from django.contrib import admin

from .models import Run


@admin.register(Run)
class RunAdmin(admin.ModelAdmin):
    list_display = ('id', 'command', 'preset', 'seed', 'scans', 'keyframes', 'loops', 'rmse',
                    'status', 'created_at')
    list_filter = ('command', 'status', 'preset', 'created_at')
    search_fields = ('dataset', 'output_dir', 'preset')
    readonly_fields = ('created_at',)
    ordering = ('-created_at',)
