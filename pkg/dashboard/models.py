from django.db import models


class Run(models.Model):
    COMMANDS = [
        ('run', 'Odometría'),
        ('simulate', 'Simulación'),
        ('eval', 'Evaluación'),
        ('export_map', 'Exportación de mapa'),
    ]

    STATUS_CHOICES = [
        ('ok', 'Completada'),
        ('failed', 'Fallida'),
    ]

    command = models.CharField(max_length=20, choices=COMMANDS, verbose_name="Comando")
    preset = models.CharField(max_length=50, blank=True, verbose_name="Escena")
    seed = models.IntegerField(null=True, blank=True, verbose_name="Semilla")
    dataset = models.CharField(max_length=500, blank=True, verbose_name="Dataset")
    output_dir = models.CharField(max_length=500, blank=True, verbose_name="Directorio de salida")
    config = models.TextField(blank=True, default='{}', verbose_name="Configuración (JSON)")
    scans = models.PositiveIntegerField(default=0, verbose_name="Barridos")
    keyframes = models.PositiveIntegerField(default=0, verbose_name="Keyframes")
    loops = models.PositiveIntegerField(default=0, verbose_name="Lazos aceptados")
    rmse = models.FloatField(null=True, blank=True, verbose_name="ATE RMSE (m)")
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='ok',
                              verbose_name="Estado")
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        verbose_name = "Corrida"
        verbose_name_plural = "Corridas"
        ordering = ['-created_at', '-id']

    def __str__(self):
        return f"{self.get_command_display()} #{self.pk} ({self.get_status_display()})"
